use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Screening confusion counts. The positive class is a valid plate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenConfusion {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenRates {
    pub fnr: f64,
    pub dr: f64,
    pub fpr: f64,
    pub npdr: f64,
}

impl ScreenConfusion {
    /// Tallies (truth_valid, predicted_valid) pairs.
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ScreenConfusion::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

pub fn screen_rates(c: &ScreenConfusion) -> Result<ScreenRates> {
    let pos = c.tp + c.fn_;
    let neg = c.fp + c.tn;
    if pos == 0 {
        return Err(Error::UndefinedRate("no valid plates (tp + fn = 0)".into()));
    }
    if neg == 0 {
        return Err(Error::UndefinedRate("no invalid plates (fp + tn = 0)".into()));
    }
    let (pos, neg) = (pos as f64, neg as f64);
    Ok(ScreenRates {
        dr: c.tp as f64 / pos,
        fnr: c.fn_ as f64 / pos,
        npdr: c.tn as f64 / neg,
        fpr: c.fp as f64 / neg,
    })
}

/// Rate as a whole percentage, halves rounded away from zero.
pub fn percent(rate: f64) -> u32 {
    (rate * 100.0).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountValidation {
    pub approval_rate: f64,
    pub approval_pct: u32,
}

pub fn count_validation_rates(matched: u64, total: u64) -> Result<CountValidation> {
    if total == 0 {
        return Err(Error::UndefinedRate("count validation over zero plates".into()));
    }
    if matched > total {
        return Err(Error::validation("match", format!("{matched} exceeds total {total}")));
    }
    let rate = matched as f64 / total as f64;
    Ok(CountValidation {
        approval_rate: rate,
        approval_pct: percent(rate),
    })
}

pub fn verify_rate(mismatched: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::UndefinedRate("count validation over zero plates".into()));
    }
    if mismatched > total {
        return Err(Error::validation("mismatch", format!("{mismatched} exceeds total {total}")));
    }
    Ok(mismatched as f64 / total as f64)
}

/// One count-validation row with its consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub label: String,
    pub matched: u64,
    pub mismatched: u64,
    pub total: u64,
    pub approval_pct: u32,
    pub verify_pct: u32,
    /// False when `matched + mismatched > total`; the rates are still
    /// reported, but the row cannot describe a single set of plates.
    pub consistent: bool,
}

impl Table3Row {
    pub fn new(label: impl Into<String>, matched: u64, mismatched: u64, total: u64) -> Result<Self> {
        let approval = count_validation_rates(matched, total)?;
        let verify = verify_rate(mismatched, total)?;
        Ok(Table3Row {
            label: label.into(),
            matched,
            mismatched,
            total,
            approval_pct: approval.approval_pct,
            verify_pct: percent(verify),
            consistent: matched + mismatched <= total,
        })
    }
}
