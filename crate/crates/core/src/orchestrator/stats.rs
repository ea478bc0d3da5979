use serde::{Deserialize, Serialize};

use super::state::{EscalationCause, PlateState, StateKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_id: String,
    pub plates_total: u64,
    /// Plates that have left RECEIVED.
    pub processed: u64,
    pub terminal: u64,
    pub auto_approved: u64,
    pub escalated_mismatch: u64,
    pub escalated_invalid: u64,
    /// Valid plates that overran the latency budget.
    pub escalated_latency: u64,
    pub human_approved: u64,
    pub human_rejected: u64,
    pub awaiting_review: u64,
    pub counter_invocations: u64,
    /// Two counter runs per plate, as if nothing were screened out.
    pub counter_invocations_without_prescreen: u64,
    /// `1 - counter_invocations / counter_invocations_without_prescreen`, 0 for an empty run.
    pub savings_fraction: f64,
    pub mean_latency_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_latency_ms: f64,
    pub max_latency_ms: f64,
}

impl RunStats {
    pub fn from_states<'a>(run_id: &str, states: impl IntoIterator<Item = &'a PlateState>) -> RunStats {
        let mut s = RunStats {
            run_id: run_id.into(),
            plates_total: 0,
            processed: 0,
            terminal: 0,
            auto_approved: 0,
            escalated_mismatch: 0,
            escalated_invalid: 0,
            escalated_latency: 0,
            human_approved: 0,
            human_rejected: 0,
            awaiting_review: 0,
            counter_invocations: 0,
            counter_invocations_without_prescreen: 0,
            savings_fraction: 0.0,
            mean_latency_ms: 0.0,
            p95_latency_ms: 0.0,
            max_latency_ms: 0.0,
        };
        let mut latencies = Vec::new();
        for p in states {
            s.plates_total += 1;
            s.counter_invocations += p.counter_verdicts().count() as u64;
            if p.state != StateKind::Received {
                s.processed += 1;
            }
            if let Some(ms) = p.pipeline_ms() {
                latencies.push(ms);
            }
            match p.state {
                StateKind::AutoApproved => s.auto_approved += 1,
                StateKind::HumanApproved => s.human_approved += 1,
                StateKind::HumanRejected => s.human_rejected += 1,
                StateKind::Escalated => s.awaiting_review += 1,
                _ => {}
            }
            if p.state.is_terminal() {
                s.terminal += 1;
            }
            match p.escalation.as_ref().map(|e| e.cause) {
                Some(EscalationCause::Invalid) => s.escalated_invalid += 1,
                Some(EscalationCause::Mismatch) => s.escalated_mismatch += 1,
                Some(EscalationCause::Latency) => s.escalated_latency += 1,
                None => {}
            }
        }
        s.counter_invocations_without_prescreen = 2 * s.plates_total;
        if s.counter_invocations_without_prescreen > 0 {
            s.savings_fraction = 1.0 - s.counter_invocations as f64 / s.counter_invocations_without_prescreen as f64;
        }
        if !latencies.is_empty() {
            latencies.sort_by(f64::total_cmp);
            s.mean_latency_ms = latencies.iter().sum::<f64>() / latencies.len() as f64;
            let rank = (0.95 * latencies.len() as f64).ceil() as usize;
            s.p95_latency_ms = latencies[rank.max(1) - 1];
            s.max_latency_ms = *latencies.last().expect("non-empty");
        }
        s
    }

    /// Every processed plate went exactly one way out of the gate.
    pub fn partition_holds(&self) -> bool {
        self.auto_approved + self.escalated_mismatch + self.escalated_invalid + self.escalated_latency == self.processed
    }
}
