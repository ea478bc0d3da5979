//! Versioned pipeline configuration, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{CounterAConfig, CounterBConfig, ScreenerConfig};
use crate::error::{Error, Result};
use crate::metrics::{LossWeights, DEFAULT_DELTA};
use crate::registry::{DEFAULT_DEGRADATION_MARGIN, DEFAULT_LIVE_WINDOW};

/// Per-plate wall-clock budget.
pub const DEFAULT_LATENCY_BUDGET_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Bumped by every applied recalibration.
    pub version: u32,
    /// Consensus tolerance on the relative count difference.
    pub delta: f64,
    pub latency_budget_ms: u64,
    pub loss: LossWeights,
    pub screener: ScreenerConfig,
    pub counter_a: CounterAConfig,
    pub counter_b: CounterBConfig,
    pub live_window: usize,
    pub degradation_margin: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: 1,
            delta: DEFAULT_DELTA,
            latency_budget_ms: DEFAULT_LATENCY_BUDGET_MS,
            loss: LossWeights::default(),
            screener: ScreenerConfig::default(),
            counter_a: CounterAConfig::default(),
            counter_b: CounterBConfig::default(),
            live_window: DEFAULT_LIVE_WINDOW,
            degradation_margin: DEFAULT_DEGRADATION_MARGIN,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::validation("delta", "must be finite and >= 0"));
        }
        if self.latency_budget_ms == 0 {
            return Err(Error::validation("latency_budget_ms", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.degradation_margin) {
            return Err(Error::validation("degradation_margin", "must lie in [0, 1]"));
        }
        self.loss.validate()?;
        self.screener.validate()?;
        self.counter_a.validate()?;
        self.counter_b.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::validation("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
