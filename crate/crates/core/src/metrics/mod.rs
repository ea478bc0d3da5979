//! Evaluation loss, the consensus gate, screening and count-validation
//! rates, detection AP, and classifier scores.

mod classification;
mod detection;
mod rates;
pub mod report;

pub use classification::{balanced_f1, ece, per_class_f1, recall_of, roc_auc, ECE_BINS};
pub use detection::{map_at_iou, DetectionSummary};
pub use rates::{
    count_validation_rates, percent, screen_rates, verify_rate, CountValidation, ScreenConfusion, ScreenRates, Table3Row,
};

use serde::{Deserialize, Serialize};

use crate::classes::ColonyClass;
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const CE_EPSILON: f64 = 1e-15;
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0 }
    }
}

impl LossWeights {
    pub const COUNT_ONLY: LossWeights = LossWeights { alpha: 1.0, beta: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::validation("alpha", "must be finite and >= 0"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::validation("beta", "must be finite and >= 0"));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::validation("alpha", "alpha and beta cannot both be zero"));
        }
        Ok(())
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Negative log-probability of the true class; `probs` is indexed by [`ColonyClass::index`].
pub fn cross_entropy(true_class: ColonyClass, probs: [f64; 2]) -> Result<f64> {
    let sum = probs[0] + probs[1];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation("class_probs", "must be a distribution over {bacteria, mold}"));
    }
    Ok(-probs[true_class.index()].max(CE_EPSILON).ln())
}

/// `alpha * smoothL1(pred - true) + beta * CE(true_class, probs)`.
pub fn eval_loss(
    true_count: u32,
    pred_count: u32,
    true_class: ColonyClass,
    class_probs: [f64; 2],
    w: LossWeights,
) -> Result<f64> {
    w.validate()?;
    let ce = cross_entropy(true_class, class_probs)?;
    let diff = pred_count as f64 - true_count as f64;
    Ok(w.alpha * smooth_l1(diff) + w.beta * ce)
}

/// Count term alone, for feedback rows that carry no class label.
pub fn count_loss(true_count: u32, pred_count: u32, alpha: f64) -> f64 {
    alpha * smooth_l1(pred_count as f64 - true_count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AutoApprove,
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusDecision {
    pub count_a: u32,
    pub count_b: u32,
    pub relative_delta: f64,
    pub delta_threshold: f64,
    pub outcome: Outcome,
}

/// Relative disagreement `|a - b| / max(a, b, 1)`.
pub fn relative_delta(a: u32, b: u32) -> f64 {
    a.abs_diff(b) as f64 / a.max(b).max(1) as f64
}

/// Auto-approves iff the relative disagreement is at most `delta`.
pub fn consensus(count_a: i64, count_b: i64, delta: f64) -> Result<ConsensusDecision> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::validation("delta", "must be finite and >= 0"));
    }
    let a = u32::try_from(count_a).map_err(|_| Error::validation("count_a", "must be a non-negative count"))?;
    let b = u32::try_from(count_b).map_err(|_| Error::validation("count_b", "must be a non-negative count"))?;
    let rel = relative_delta(a, b);
    Ok(ConsensusDecision {
        count_a: a,
        count_b: b,
        relative_delta: rel,
        delta_threshold: delta,
        outcome: if rel <= delta { Outcome::AutoApprove } else { Outcome::Escalate },
    })
}
