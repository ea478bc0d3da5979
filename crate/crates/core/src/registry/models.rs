//! Candidate colony classifiers. Each predicts the probability of mold.

use serde::{Deserialize, Serialize};

use super::features::{ColonyFeatures, LabeledFeatures, FEATURE_COUNT};
use crate::classes::ColonyClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateId {
    AreaStump,
    LogisticGd,
    Knn3,
    MorphRule,
}

impl CandidateId {
    pub const ALL: [CandidateId; 4] = [
        CandidateId::AreaStump,
        CandidateId::LogisticGd,
        CandidateId::Knn3,
        CandidateId::MorphRule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateId::AreaStump => "area-stump",
            CandidateId::LogisticGd => "logistic-gd",
            CandidateId::Knn3 => "knn-3",
            CandidateId::MorphRule => "morph-rule",
        }
    }

    pub fn parse(s: &str) -> Result<CandidateId> {
        CandidateId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::validation("candidate_id", format!("unknown candidate {s:?}")))
    }
}

pub const LOGISTIC_STEPS: usize = 500;
pub const LOGISTIC_STEP_SIZE: f64 = 0.1;
/// Morphological rule: mold iff area above this many pixels...
pub const MORPH_MIN_AREA: f64 = 700.0;
/// ...and circularity below this.
pub const MORPH_MAX_CIRCULARITY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_COUNT],
    pub scale: [f64; FEATURE_COUNT],
}

impl Standardizer {
    fn fit(data: &[LabeledFeatures]) -> Standardizer {
        let n = data.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        let mut scale = [0.0; FEATURE_COUNT];
        for d in data {
            for (m, v) in mean.iter_mut().zip(d.features.to_array()) {
                *m += v / n;
            }
        }
        for d in data {
            for (j, v) in d.features.to_array().into_iter().enumerate() {
                scale[j] += (v - mean[j]).powi(2) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, f: &ColonyFeatures) -> [f64; FEATURE_COUNT] {
        let mut z = f.to_array();
        for j in 0..FEATURE_COUNT {
            z[j] = (z[j] - self.mean[j]) / self.scale[j];
        }
        z
    }
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    AreaStump {
        threshold: f64,
        /// Probability of mold at or below / above the threshold.
        p_low: f64,
        p_high: f64,
    },
    LogisticGd {
        standardizer: Standardizer,
        weights: [f64; FEATURE_COUNT],
        bias: f64,
    },
    Knn3 {
        standardizer: Standardizer,
        points: Vec<([f64; FEATURE_COUNT], ColonyClass)>,
    },
    MorphRule {
        min_area: f64,
        max_circularity: f64,
    },
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn is_mold(c: ColonyClass) -> f64 {
    (c == ColonyClass::Mold) as u8 as f64
}

impl Model {
    pub fn fit(candidate: CandidateId, data: &[LabeledFeatures]) -> Result<Model> {
        if data.is_empty() {
            return Err(Error::insufficient("training samples", 1, 0));
        }
        Ok(match candidate {
            CandidateId::AreaStump => fit_stump(data),
            CandidateId::LogisticGd => fit_logistic(data),
            CandidateId::Knn3 => {
                let standardizer = Standardizer::fit(data);
                let points = data
                    .iter()
                    .map(|d| (standardizer.apply(&d.features), d.label))
                    .collect();
                Model::Knn3 { standardizer, points }
            }
            CandidateId::MorphRule => Model::MorphRule {
                min_area: MORPH_MIN_AREA,
                max_circularity: MORPH_MAX_CIRCULARITY,
            },
        })
    }

    pub fn candidate(&self) -> CandidateId {
        match self {
            Model::AreaStump { .. } => CandidateId::AreaStump,
            Model::LogisticGd { .. } => CandidateId::LogisticGd,
            Model::Knn3 { .. } => CandidateId::Knn3,
            Model::MorphRule { .. } => CandidateId::MorphRule,
        }
    }

    pub fn id(&self) -> &'static str {
        self.candidate().as_str()
    }

    /// Probability that the colony is mold.
    pub fn predict_mold(&self, f: &ColonyFeatures) -> f64 {
        match self {
            Model::AreaStump { threshold, p_low, p_high } => {
                if f.area <= *threshold {
                    *p_low
                } else {
                    *p_high
                }
            }
            Model::LogisticGd {
                standardizer,
                weights,
                bias,
            } => {
                let z = standardizer.apply(f);
                sigmoid(bias + z.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>())
            }
            Model::Knn3 { standardizer, points } => {
                let z = standardizer.apply(f);
                // Three nearest by squared distance; earlier points win ties.
                let mut best: [(f64, usize); 3] = [(f64::INFINITY, usize::MAX); 3];
                for (i, (p, _)) in points.iter().enumerate() {
                    let d: f64 = p.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best[2].0 {
                        best[2] = (d, i);
                        best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    }
                }
                let found: Vec<_> = best.iter().filter(|b| b.1 != usize::MAX).collect();
                found.iter().map(|b| is_mold(points[b.1].1)).sum::<f64>() / found.len().max(1) as f64
            }
            Model::MorphRule {
                min_area,
                max_circularity,
            } => {
                let mold = f.area > *min_area && f.circularity < *max_circularity;
                mold as u8 as f64
            }
        }
    }

    pub fn classify(&self, f: &ColonyFeatures) -> ColonyClass {
        if self.predict_mold(f) >= 0.5 {
            ColonyClass::Mold
        } else {
            ColonyClass::Bacteria
        }
    }
}

/// Area threshold maximizing balanced accuracy; mold on the side where it is more common.
fn fit_stump(data: &[LabeledFeatures]) -> Model {
    let mut sorted: Vec<(f64, ColonyClass)> = data.iter().map(|d| (d.features.area, d.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_mold = sorted.iter().filter(|s| s.1 == ColonyClass::Mold).count() as f64;
    let n_bact = sorted.len() as f64 - n_mold;
    let side_rate = |mold: f64, bact: f64| (mold + 1.0) / (mold + bact + 2.0);

    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
    let (mut low_mold, mut low_bact) = (0.0, 0.0);
    for i in 0..=sorted.len() {
        if i > 0 {
            if sorted[i - 1].1 == ColonyClass::Mold {
                low_mold += 1.0;
            } else {
                low_bact += 1.0;
            }
        }
        if i > 0 && i < sorted.len() && sorted[i].0 == sorted[i - 1].0 {
            continue;
        }
        let threshold = match i {
            0 => sorted[0].0 - 1.0,
            i if i == sorted.len() => sorted[i - 1].0,
            i => (sorted[i - 1].0 + sorted[i].0) / 2.0,
        };
        let (high_mold, high_bact) = (n_mold - low_mold, n_bact - low_bact);
        let p_low = side_rate(low_mold, low_bact);
        let p_high = side_rate(high_mold, high_bact);
        // Balanced accuracy of the majority-vote rule on each side.
        let tpr = |m: f64| if n_mold > 0.0 { m / n_mold } else { 0.0 };
        let tnr = |b: f64| if n_bact > 0.0 { b / n_bact } else { 0.0 };
        let mold_caught = (p_low >= 0.5) as u8 as f64 * low_mold + (p_high >= 0.5) as u8 as f64 * high_mold;
        let bact_kept = (p_low < 0.5) as u8 as f64 * low_bact + (p_high < 0.5) as u8 as f64 * high_bact;
        let score = 0.5 * (tpr(mold_caught) + tnr(bact_kept));
        if score > best.0 {
            best = (score, threshold, p_low, p_high);
        }
    }
    Model::AreaStump {
        threshold: best.1,
        p_low: best.2,
        p_high: best.3,
    }
}

/// Fixed-step full-batch gradient descent on the mean logistic loss.
fn fit_logistic(data: &[LabeledFeatures]) -> Model {
    let standardizer = Standardizer::fit(data);
    let xs: Vec<[f64; FEATURE_COUNT]> = data.iter().map(|d| standardizer.apply(&d.features)).collect();
    let ys: Vec<f64> = data.iter().map(|d| is_mold(d.label)).collect();
    let n = data.len() as f64;
    let mut w = [0.0; FEATURE_COUNT];
    let mut b = 0.0;
    for _ in 0..LOGISTIC_STEPS {
        let mut gw = [0.0; FEATURE_COUNT];
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let p = sigmoid(b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
            let e = p - y;
            for j in 0..FEATURE_COUNT {
                gw[j] += e * x[j] / n;
            }
            gb += e / n;
        }
        for j in 0..FEATURE_COUNT {
            w[j] -= LOGISTIC_STEP_SIZE * gw[j];
        }
        b -= LOGISTIC_STEP_SIZE * gb;
    }
    Model::LogisticGd {
        standardizer,
        weights: w,
        bias: b,
    }
}
