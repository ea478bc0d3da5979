//! Threshold recalibration against expert counts.
//!
//! Each counter's decision threshold is grid-searched to minimize the mean
//! count loss `smoothL1(pred - expert)` on the feedback set. The incumbent
//! value is always on the grid and wins ties, so the loss never goes up.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{count_primary, count_secondary, AgentKind, AgentVerdict, Quality, REASON_CLEAR};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::count_loss;
use crate::raster::PlateImage;
use crate::registry::Model;

pub const MIN_FEEDBACK_ROWS: usize = 25;

/// Counts below this loss difference are treated as ties.
const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FeedbackSample {
    pub plate_id: String,
    pub image: PlateImage,
    pub expert_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamChange<T> {
    pub before: T,
    pub after: T,
}

/// Mean per-row loss of each counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLoss {
    pub counter_a: f64,
    pub counter_b: f64,
    /// Mean over all (row, counter) pairs.
    pub mean: f64,
}

impl FeedbackLoss {
    fn new(a: f64, b: f64) -> Self {
        FeedbackLoss {
            counter_a: a,
            counter_b: b,
            mean: (a + b) / 2.0,
        }
    }
}

/// A proposed configuration; it takes effect only when applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationUpdate {
    pub from_version: u32,
    pub version: u32,
    pub rows: usize,
    pub changed: bool,
    pub counter_a_threshold: ParamChange<u8>,
    pub counter_b_peak_height: ParamChange<f64>,
    pub loss_before: FeedbackLoss,
    pub loss_after: FeedbackLoss,
    pub config: PipelineConfig,
}

pub fn threshold_grid(incumbent: u8) -> Vec<u8> {
    let mut g: Vec<u8> = (100..=190).step_by(10).collect();
    g.push(incumbent);
    g.sort_unstable();
    g.dedup();
    g
}

pub fn peak_height_grid(incumbent: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (3..=12).map(|k| k as f64 * 0.5).collect();
    g.push(incumbent);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

fn clearance(plate_id: &str) -> AgentVerdict {
    // Feedback rows are expert-validated plates, which is the clearance the counters need.
    AgentVerdict {
        plate_id: plate_id.into(),
        quality: Quality::Valid,
        count: 0,
        reason: REASON_CLEAR.into(),
        agent: AgentKind::Screener,
        elapsed_ms: 0.0,
    }
}

fn mean_loss_a(samples: &[FeedbackSample], cfg: &PipelineConfig, threshold: u8, model: Option<&Model>) -> Result<f64> {
    let mut c = cfg.counter_a;
    c.threshold = threshold;
    let losses: Result<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let (v, _) = count_primary(&s.image, &clearance(&s.plate_id), &c, model)?;
            Ok(count_loss(s.expert_count, v.count, 1.0))
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / samples.len() as f64)
}

fn mean_loss_b(samples: &[FeedbackSample], cfg: &PipelineConfig, peak_height: f64) -> Result<f64> {
    let mut c = cfg.counter_b;
    c.peak_height = peak_height;
    let losses: Result<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let v = count_secondary(&s.image, &clearance(&s.plate_id), &c)?;
            Ok(count_loss(s.expert_count, v.count, 1.0))
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / samples.len() as f64)
}

/// Index of the lowest loss, keeping `incumbent` unless something is strictly better.
fn argmin(losses: &[f64], incumbent: usize) -> usize {
    let mut best = incumbent;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] - LOSS_EPS {
            best = i;
        }
    }
    best
}

/// Proposes new counter thresholds from expert-counted feedback.
pub fn recalibrate(samples: &[FeedbackSample], cfg: &PipelineConfig, model: Option<&Model>) -> Result<CalibrationUpdate> {
    if samples.len() < MIN_FEEDBACK_ROWS {
        return Err(Error::insufficient("recalibration feedback rows", MIN_FEEDBACK_ROWS, samples.len()));
    }
    cfg.validate()?;

    let t_grid = threshold_grid(cfg.counter_a.threshold);
    let t_loss: Vec<f64> = t_grid
        .iter()
        .map(|&t| mean_loss_a(samples, cfg, t, model))
        .collect::<Result<_>>()?;
    let t_inc = t_grid.iter().position(|&t| t == cfg.counter_a.threshold).expect("incumbent on grid");
    let t_best = argmin(&t_loss, t_inc);

    let h_grid = peak_height_grid(cfg.counter_b.peak_height);
    let h_loss: Vec<f64> = h_grid
        .iter()
        .map(|&h| mean_loss_b(samples, cfg, h))
        .collect::<Result<_>>()?;
    let h_inc = h_grid.iter().position(|&h| h == cfg.counter_b.peak_height).expect("incumbent on grid");
    let h_best = argmin(&h_loss, h_inc);

    let changed = t_best != t_inc || h_best != h_inc;
    let mut next = cfg.clone();
    next.counter_a.threshold = t_grid[t_best];
    next.counter_b.peak_height = h_grid[h_best];
    if changed {
        next.version = cfg.version + 1;
    }
    Ok(CalibrationUpdate {
        from_version: cfg.version,
        version: next.version,
        rows: samples.len(),
        changed,
        counter_a_threshold: ParamChange {
            before: cfg.counter_a.threshold,
            after: next.counter_a.threshold,
        },
        counter_b_peak_height: ParamChange {
            before: cfg.counter_b.peak_height,
            after: next.counter_b.peak_height,
        },
        loss_before: FeedbackLoss::new(t_loss[t_inc], h_loss[h_inc]),
        loss_after: FeedbackLoss::new(t_loss[t_best], h_loss[h_best]),
        config: next,
    })
}
