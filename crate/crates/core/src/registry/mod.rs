//! Colony classifier selection: cross-validate candidates, promote the
//! best, log promotions, and watch live accuracy against expert labels.

mod features;
mod models;

pub use features::{ColonyFeatures, LabeledFeatures, FEATURE_COUNT};
pub use models::{CandidateId, Model, Standardizer, LOGISTIC_STEPS, LOGISTIC_STEP_SIZE};

use std::cmp::Ordering;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ColonyClass;
use crate::error::{Error, Result};
use crate::metrics::{balanced_f1, ece, recall_of, roc_auc, ECE_BINS};

pub const FOLDS: usize = 5;
pub const MIN_PER_CLASS: usize = 10;
pub const DEFAULT_DEGRADATION_MARGIN: f64 = 0.10;
pub const DEFAULT_LIVE_WINDOW: usize = 20;
/// Slack on the degradation boundary so a live score sitting exactly on
/// `cv - margin` is not flagged because of rounding.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub candidate_id: CandidateId,
    /// Mean of `fold_scores`.
    pub balanced_f1: f64,
    /// Recall of the mold class over all held-out predictions.
    pub recall: f64,
    pub roc_auc: f64,
    /// Expected calibration error of the predicted-class confidence.
    pub calibration_error: f64,
    /// Mean prediction time per sample.
    pub latency_us: f64,
    pub fold_scores: Vec<f64>,
}

/// Stratified fold index per sample; each class is shuffled with `seed`
/// and dealt round-robin.
pub fn stratified_folds(labels: &[ColonyClass], seed: u64) -> Vec<usize> {
    let mut rng = crate::synthgen::stream(seed, 11);
    let mut fold = vec![0usize; labels.len()];
    for class in ColonyClass::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            fold[i] = k % FOLDS;
        }
    }
    fold
}

fn check_dataset(dataset: &[LabeledFeatures]) -> Result<()> {
    for class in ColonyClass::ALL {
        let n = dataset.iter().filter(|d| d.label == class).count();
        if n < MIN_PER_CLASS {
            return Err(Error::insufficient(format!("{} samples", class.as_str()), MIN_PER_CLASS, n));
        }
    }
    Ok(())
}

/// Stratified 5-fold cross-validation of each candidate.
pub fn evaluate_candidates(
    dataset: &[LabeledFeatures],
    candidates: &[CandidateId],
    seed: u64,
) -> Result<Vec<CandidateReport>> {
    check_dataset(dataset)?;
    let labels: Vec<ColonyClass> = dataset.iter().map(|d| d.label).collect();
    let folds = stratified_folds(&labels, seed);
    candidates.par_iter().map(|&c| cross_validate(c, dataset, &labels, &folds)).collect()
}

fn cross_validate(
    candidate: CandidateId,
    dataset: &[LabeledFeatures],
    labels: &[ColonyClass],
    folds: &[usize],
) -> Result<CandidateReport> {
    let mut p_mold = vec![0.0; dataset.len()];
    let mut fold_scores = Vec::with_capacity(FOLDS);
    let mut predict_time = 0.0;
    for k in 0..FOLDS {
        let train: Vec<LabeledFeatures> = dataset.iter().zip(folds).filter(|(_, &f)| f != k).map(|(d, _)| *d).collect();
        let held: Vec<usize> = (0..dataset.len()).filter(|&i| folds[i] == k).collect();
        let model = Model::fit(candidate, &train)?;
        let start = Instant::now();
        for &i in &held {
            p_mold[i] = model.predict_mold(&dataset[i].features);
        }
        predict_time += start.elapsed().as_secs_f64();
        let truth: Vec<ColonyClass> = held.iter().map(|&i| labels[i]).collect();
        let pred: Vec<ColonyClass> = held.iter().map(|&i| class_of(p_mold[i])).collect();
        fold_scores.push(balanced_f1(&truth, &pred)?);
    }

    let pred: Vec<ColonyClass> = p_mold.iter().map(|&p| class_of(p)).collect();
    let positive: Vec<bool> = labels.iter().map(|&l| l == ColonyClass::Mold).collect();
    let confidence: Vec<f64> = p_mold.iter().map(|&p| p.max(1.0 - p)).collect();
    let correct: Vec<bool> = pred.iter().zip(labels).map(|(a, b)| a == b).collect();
    Ok(CandidateReport {
        candidate_id: candidate,
        balanced_f1: fold_scores.iter().sum::<f64>() / FOLDS as f64,
        recall: recall_of(ColonyClass::Mold, labels, &pred)?,
        roc_auc: roc_auc(&p_mold, &positive)?,
        calibration_error: ece(&confidence, &correct, ECE_BINS)?,
        latency_us: predict_time * 1e6 / dataset.len() as f64,
        fold_scores,
    })
}

fn class_of(p_mold: f64) -> ColonyClass {
    if p_mold >= 0.5 {
        ColonyClass::Mold
    } else {
        ColonyClass::Bacteria
    }
}

/// Ranking used for promotion: balanced F1, then recall, then lower
/// latency, then candidate id so the choice never depends on input order.
fn rank(a: &CandidateReport, b: &CandidateReport) -> Ordering {
    a.balanced_f1
        .total_cmp(&b.balanced_f1)
        .then(a.recall.total_cmp(&b.recall))
        .then(b.latency_us.total_cmp(&a.latency_us))
        .then(b.candidate_id.cmp(&a.candidate_id))
}

pub fn select_best(reports: &[CandidateReport]) -> Result<&CandidateReport> {
    reports
        .iter()
        .max_by(|a, b| rank(a, b))
        .ok_or_else(|| Error::validation("reports", "at least one candidate report is required"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionRecord {
    pub candidate_id: CandidateId,
    pub timestamp: DateTime<Utc>,
    pub report: CandidateReport,
    pub reason: String,
    /// The winner refitted on the full dataset, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
}

/// Picks the best report and describes why.
pub fn promote(reports: &[CandidateReport], timestamp: DateTime<Utc>) -> Result<PromotionRecord> {
    let best = select_best(reports)?;
    let reason = format!(
        "best balanced F1 {:.4} of {} candidates (recall {:.4}, latency {:.2} us)",
        best.balanced_f1,
        reports.len(),
        best.recall,
        best.latency_us
    );
    Ok(PromotionRecord {
        candidate_id: best.candidate_id,
        timestamp,
        report: best.clone(),
        reason,
        model: None,
    })
}

/// Cross-validates, promotes, and refits the winner on all of `dataset`.
pub fn train_and_promote(
    dataset: &[LabeledFeatures],
    candidates: &[CandidateId],
    seed: u64,
    timestamp: DateTime<Utc>,
) -> Result<(Vec<CandidateReport>, PromotionRecord)> {
    let reports = evaluate_candidates(dataset, candidates, seed)?;
    let mut record = promote(&reports, timestamp)?;
    record.model = Some(Model::fit(record.candidate_id, dataset)?);
    Ok((reports, record))
}

/// Append-only promotion history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromotionLog {
    records: Vec<PromotionRecord>,
}

impl PromotionLog {
    pub fn replay(records: impl IntoIterator<Item = PromotionRecord>) -> Result<PromotionLog> {
        let mut log = PromotionLog::default();
        for r in records {
            log.append(r)?;
        }
        Ok(log)
    }

    pub fn append(&mut self, record: PromotionRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.timestamp < last.timestamp {
                return Err(Error::validation(
                    "timestamp",
                    format!("{} precedes the last promotion at {}", record.timestamp, last.timestamp),
                ));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn current(&self) -> Option<&PromotionRecord> {
        self.records.last()
    }

    pub fn records(&self) -> &[PromotionRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveStatus {
    pub degraded: bool,
    pub live_f1: f64,
    pub reference_f1: f64,
    pub window: usize,
    /// Set when degraded: a retraining request for the promoted candidate.
    pub retrain_trigger: Option<String>,
}

/// Compares live balanced F1 against the promoted cross-validation score.
pub fn monitor_live(
    window: &[(ColonyClass, ColonyClass)],
    promoted: &PromotionRecord,
    margin: f64,
    min_window: usize,
) -> Result<LiveStatus> {
    if window.len() < min_window {
        return Err(Error::insufficient("live monitoring window", min_window, window.len()));
    }
    let (pred, truth): (Vec<ColonyClass>, Vec<ColonyClass>) = window.iter().copied().unzip();
    let live_f1 = balanced_f1(&truth, &pred)?;
    let reference = promoted.report.balanced_f1;
    let degraded = live_f1 < reference - margin - BOUNDARY_EPS;
    Ok(LiveStatus {
        degraded,
        live_f1,
        reference_f1: reference,
        window: window.len(),
        retrain_trigger: degraded.then(|| {
            format!(
                "retrain {}: live balanced F1 {:.4} below {:.4} - {:.2}",
                promoted.candidate_id.as_str(),
                live_f1,
                reference,
                margin
            )
        }),
    })
}

/// Labeled colony features harvested from clean synthetic plates.
///
/// Components are matched to the ground-truth colony whose disc contains
/// their centroid; unmatched or doubly-matched components are skipped.
pub fn synthetic_training_set(seed: u64, plates: usize) -> Result<Vec<LabeledFeatures>> {
    use crate::synthgen::{generate_plate, SceneSpec};
    use crate::vision::segment_components;

    let per_plate: Vec<Vec<LabeledFeatures>> = (0..plates as u64)
        .into_par_iter()
        .map(|i| {
            let spec = SceneSpec {
                seed: seed.wrapping_mul(1_000_003).wrapping_add(i),
                colony_count_mean: 10.0,
                class_mix: 0.5,
                ..SceneSpec::default()
            };
            let (img, truth) = generate_plate(&spec)?;
            let comps = segment_components(&img, 170);
            let mut out = Vec::new();
            for comp in &comps {
                let (cx, cy) = comp.centroid;
                let hits: Vec<_> = truth
                    .colonies
                    .iter()
                    .filter(|c| (c.center.0 - cx).powi(2) + (c.center.1 - cy).powi(2) <= c.radius * c.radius)
                    .collect();
                if let [colony] = hits.as_slice() {
                    out.push(LabeledFeatures {
                        features: ColonyFeatures::extract(&img, comp),
                        label: colony.class,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_plate.into_iter().flatten().collect())
}
