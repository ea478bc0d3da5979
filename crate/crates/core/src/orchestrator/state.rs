//! Per-plate lifecycle, driven entirely by [`PlateEvent`]s so that the
//! audit trail can rebuild every state.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentVerdict, Quality};
use crate::classes::{BoxClass, ClassCounts};
use crate::error::{Error, Result};
use crate::metrics::ConsensusDecision;
use crate::vision::{BBox, QualityStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateKind {
    Received,
    ScreenedValid,
    ScreenedInvalid,
    Counted,
    AutoApproved,
    Escalated,
    HumanApproved,
    HumanRejected,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Received => "RECEIVED",
            StateKind::ScreenedValid => "SCREENED_VALID",
            StateKind::ScreenedInvalid => "SCREENED_INVALID",
            StateKind::Counted => "COUNTED",
            StateKind::AutoApproved => "AUTO_APPROVED",
            StateKind::Escalated => "ESCALATED",
            StateKind::HumanApproved => "HUMAN_APPROVED",
            StateKind::HumanRejected => "HUMAN_REJECTED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            StateKind::AutoApproved | StateKind::HumanApproved | StateKind::HumanRejected
        )
    }

    /// Terminal states whose result is released.
    pub fn is_approved(self) -> bool {
        matches!(self, StateKind::AutoApproved | StateKind::HumanApproved)
    }

    pub fn can_move_to(self, to: StateKind) -> bool {
        use StateKind::*;
        matches!(
            (self, to),
            (Received, ScreenedValid)
                | (Received, ScreenedInvalid)
                | (ScreenedInvalid, Escalated)
                | (ScreenedValid, Counted)
                | (Counted, AutoApproved)
                | (Counted, Escalated)
                | (Escalated, HumanApproved)
                | (Escalated, HumanRejected)
        )
    }
}

impl std::fmt::Display for StateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationCause {
    /// The screener rejected the plate.
    Invalid,
    /// The counters disagreed beyond the consensus tolerance.
    Mismatch,
    /// The plate overran the latency budget.
    Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub cause: EscalationCause,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertVerdict {
    pub plate_id: String,
    pub reviewer_id: String,
    pub final_count: u32,
    pub final_quality: Quality,
    #[serde(default)]
    pub final_class_counts: ClassCounts,
    #[serde(default)]
    pub note: String,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
}

impl ExpertVerdict {
    pub fn validate(&self) -> Result<()> {
        if self.reviewer_id.trim().is_empty() {
            return Err(Error::validation("reviewer_id", "must not be empty"));
        }
        if self.final_quality == Quality::Invalid && self.final_count != 0 {
            return Err(Error::validation("final_count", "must be 0 when final_quality is invalid"));
        }
        let classes = self.final_class_counts.total();
        if classes != 0 && classes != self.final_count {
            return Err(Error::validation(
                "final_class_counts",
                format!("sum {classes} differs from final_count {}", self.final_count),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateKind,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub screen_ms: f64,
    pub count_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateState {
    pub plate_id: String,
    pub run_id: String,
    pub state: StateKind,
    pub verdicts: Vec<AgentVerdict>,
    pub decision: Option<ConsensusDecision>,
    pub escalation: Option<Escalation>,
    pub quality_stats: Option<QualityStats>,
    /// Primary-counter detections after soft-NMS.
    pub boxes: Vec<BBox>,
    pub expert: Option<ExpertVerdict>,
    pub latency: Option<Latency>,
    pub transitions: Vec<Transition>,
}

impl PlateState {
    pub fn counter_verdicts(&self) -> impl Iterator<Item = &AgentVerdict> {
        self.verdicts.iter().filter(|v| v.agent != AgentKind::Screener)
    }

    pub fn verdict(&self, agent: AgentKind) -> Option<&AgentVerdict> {
        self.verdicts.iter().find(|v| v.agent == agent)
    }

    pub fn entered_at(&self, state: StateKind) -> Option<DateTime<Utc>> {
        self.transitions.iter().rev().find(|t| t.state == state).map(|t| t.at)
    }

    /// Class tally of the primary counter's boxes.
    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for b in &self.boxes {
            if b.class != BoxClass::Unknown {
                c.add(b.class);
            }
        }
        c
    }

    /// Wall-clock pipeline time: screening through consensus, or screening alone.
    pub fn pipeline_ms(&self) -> Option<f64> {
        match self.latency {
            Some(l) => Some(l.total_ms),
            None => self.verdict(AgentKind::Screener).map(|v| v.elapsed_ms),
        }
    }

    /// Released count: the expert's if adjudicated, else counter A's.
    pub fn final_count(&self) -> Option<u32> {
        match self.state {
            StateKind::HumanApproved | StateKind::HumanRejected => self.expert.as_ref().map(|e| e.final_count),
            StateKind::AutoApproved => self.verdict(AgentKind::CounterA).map(|v| v.count),
            _ => None,
        }
    }
}

/// Everything that can happen to a plate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PlateEvent {
    Received {
        run_id: String,
        image_sha256: String,
    },
    Screened {
        verdict: AgentVerdict,
        stats: QualityStats,
    },
    CounterVerdict {
        verdict: AgentVerdict,
        #[serde(default)]
        boxes: Vec<BBox>,
    },
    Counted {
        latency: Latency,
    },
    Consensus {
        decision: ConsensusDecision,
    },
    AutoApproved,
    Escalated {
        escalation: Escalation,
    },
    Adjudicated {
        verdict: ExpertVerdict,
    },
}

impl PlateEvent {
    pub fn action(&self) -> &'static str {
        match self {
            PlateEvent::Received { .. } => "received",
            PlateEvent::Screened { .. } => "screened",
            PlateEvent::CounterVerdict { .. } => "counter_verdict",
            PlateEvent::Counted { .. } => "counted",
            PlateEvent::Consensus { .. } => "consensus",
            PlateEvent::AutoApproved => "auto_approved",
            PlateEvent::Escalated { .. } => "escalated",
            PlateEvent::Adjudicated { .. } => "adjudicated",
        }
    }

    pub fn actor(&self) -> String {
        match self {
            PlateEvent::Screened { .. } => "screener".into(),
            PlateEvent::CounterVerdict { verdict, .. } => verdict.agent.as_str().into(),
            PlateEvent::Consensus { .. } | PlateEvent::AutoApproved => "consensus".into(),
            PlateEvent::Adjudicated { verdict } => format!("human:{}", verdict.reviewer_id),
            _ => "system".into(),
        }
    }
}

fn illegal(state: &PlateState, to: &str) -> Error {
    Error::IllegalTransition {
        plate_id: state.plate_id.clone(),
        from: state.state.as_str().into(),
        to: to.into(),
    }
}

fn enter(state: &mut PlateState, to: StateKind, at: DateTime<Utc>) -> Result<()> {
    if !state.state.can_move_to(to) {
        return Err(illegal(state, to.as_str()));
    }
    state.state = to;
    state.transitions.push(Transition { state: to, at });
    Ok(())
}

impl PlateState {
    /// Starts a plate from its `Received` event.
    pub fn received(plate_id: &str, run_id: &str, at: DateTime<Utc>) -> PlateState {
        PlateState {
            plate_id: plate_id.into(),
            run_id: run_id.into(),
            state: StateKind::Received,
            verdicts: Vec::new(),
            decision: None,
            escalation: None,
            quality_stats: None,
            boxes: Vec::new(),
            expert: None,
            latency: None,
            transitions: vec![Transition {
                state: StateKind::Received,
                at,
            }],
        }
    }

    /// Applies one event, rejecting anything the lifecycle does not allow.
    pub fn apply(&mut self, event: &PlateEvent, at: DateTime<Utc>) -> Result<()> {
        match event {
            PlateEvent::Received { .. } => return Err(illegal(self, "RECEIVED")),
            PlateEvent::Screened { verdict, stats } => {
                let to = match verdict.quality {
                    Quality::Valid => StateKind::ScreenedValid,
                    Quality::Invalid => StateKind::ScreenedInvalid,
                };
                enter(self, to, at)?;
                self.verdicts.push(verdict.clone());
                self.quality_stats = Some(*stats);
            }
            PlateEvent::CounterVerdict { verdict, boxes } => {
                if self.state != StateKind::ScreenedValid || verdict.agent == AgentKind::Screener {
                    return Err(illegal(self, "COUNTER_VERDICT"));
                }
                if self.verdict(verdict.agent).is_some() {
                    return Err(Error::Conflict(format!(
                        "plate {} already has a {} verdict",
                        self.plate_id,
                        verdict.agent.as_str()
                    )));
                }
                self.verdicts.push(verdict.clone());
                self.boxes.extend_from_slice(boxes);
            }
            PlateEvent::Counted { latency } => {
                if self.counter_verdicts().count() != 2 {
                    return Err(illegal(self, "COUNTED"));
                }
                enter(self, StateKind::Counted, at)?;
                self.latency = Some(*latency);
            }
            PlateEvent::Consensus { decision } => {
                if self.state != StateKind::Counted || self.decision.is_some() {
                    return Err(illegal(self, "CONSENSUS"));
                }
                self.decision = Some(*decision);
            }
            PlateEvent::AutoApproved => {
                if self.decision.is_none() {
                    return Err(illegal(self, "AUTO_APPROVED"));
                }
                enter(self, StateKind::AutoApproved, at)?;
            }
            PlateEvent::Escalated { escalation } => {
                enter(self, StateKind::Escalated, at)?;
                self.escalation = Some(escalation.clone());
            }
            PlateEvent::Adjudicated { verdict } => {
                if self.state.is_terminal() && self.expert.is_some() {
                    return Err(Error::Conflict(format!("plate {} already adjudicated", self.plate_id)));
                }
                let to = match verdict.final_quality {
                    Quality::Valid => StateKind::HumanApproved,
                    Quality::Invalid => StateKind::HumanRejected,
                };
                enter(self, to, at)?;
                self.expert = Some(verdict.clone());
            }
        }
        Ok(())
    }
}
