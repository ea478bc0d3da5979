//! The three plate agents: a quality screener and two independent counters.
//!
//! Agents are pure functions of `(image, config)` apart from the measured
//! `elapsed_ms`. The counters refuse to run unless handed a screener
//! verdict that cleared the plate.

mod counters;
mod screener;

pub use counters::{count_primary, count_secondary, CounterAConfig, CounterBConfig};
pub use screener::{screen, screen_stats, ScreenerConfig, REASON_CLEAR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Valid,
    Invalid,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Valid => "valid",
            Quality::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Screener,
    CounterA,
    CounterB,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Screener => "screener",
            AgentKind::CounterA => "counter_a",
            AgentKind::CounterB => "counter_b",
        }
    }
}

/// Structured agent output.
///
/// Serializes as `{"plate_id", "quality", "count", "reason", "agent", "elapsed_ms"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub plate_id: String,
    pub quality: Quality,
    pub count: u32,
    pub reason: String,
    pub agent: AgentKind,
    pub elapsed_ms: f64,
}

impl AgentVerdict {
    pub fn validate(&self) -> Result<()> {
        if self.quality == Quality::Invalid && (self.count != 0 || self.reason.is_empty()) {
            return Err(Error::validation(
                "verdict",
                "an invalid verdict needs count 0 and a reason",
            ));
        }
        if !(self.elapsed_ms.is_finite() && self.elapsed_ms >= 0.0) {
            return Err(Error::validation("elapsed_ms", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Same decision, ignoring timing.
    pub fn same_outcome(&self, other: &AgentVerdict) -> bool {
        self.plate_id == other.plate_id
            && self.quality == other.quality
            && self.count == other.count
            && self.reason == other.reason
            && self.agent == other.agent
    }
}

fn ms_since(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Checks that `clearance` is a screener verdict that passed the plate.
fn require_clearance(clearance: &AgentVerdict) -> Result<()> {
    if clearance.agent != AgentKind::Screener {
        return Err(Error::ContractViolation(format!(
            "plate {} was not screened (got a {} verdict)",
            clearance.plate_id,
            clearance.agent.as_str()
        )));
    }
    if clearance.quality != Quality::Valid {
        return Err(Error::ContractViolation(format!(
            "plate {} was screened invalid ({}) and must not be counted",
            clearance.plate_id, clearance.reason
        )));
    }
    Ok(())
}
