//! Plain-text and JSON renderings laid out like the detection, screening
//! and count-validation tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DetectionSummary, ScreenRates, Table3Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub label: String,
    pub summary: DetectionSummary,
}

impl DetectionRow {
    /// Share of truth boxes never matched.
    pub fn fnr(&self) -> f64 {
        1.0 - self.summary.recall
    }

    /// Share of detections that matched nothing.
    pub fn fpr(&self) -> f64 {
        if self.summary.detections == 0 {
            0.0
        } else {
            1.0 - self.summary.precision
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub label: String,
    pub samples: u64,
    pub rates: ScreenRates,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detection: Vec<DetectionRow>,
    pub screening: Vec<ScreeningRow>,
    pub count_validation: Vec<Table3Row>,
}

impl MetricsReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Detection");
        let _ = writeln!(out, "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6}", "Model", "mAP", "Prec.", "Rec.", "FNR", "FPR");
        for r in &self.detection {
            let s = &r.summary;
            let _ = writeln!(
                out,
                "{:<16} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
                r.label,
                100.0 * s.map,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * r.fnr(),
                100.0 * r.fpr()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Invalid plate detection");
        let _ = writeln!(out, "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6}", "Model", "N", "FNR", "DR", "FPR", "NPDR");
        for r in &self.screening {
            let x = &r.rates;
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
                r.label, r.samples, x.fnr, x.dr, x.fpr, x.npdr
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Count validation");
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>8} {:>6} {:>6} {:>6}",
            "Model", "Match", "Mismatch", "N", "Appr.", "Verify"
        );
        for r in &self.count_validation {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>8} {:>6} {:>5}% {:>5}%{}",
                r.label,
                r.matched,
                r.mismatched,
                r.total,
                r.approval_pct,
                r.verify_pct,
                if r.consistent { "" } else { "  (match + mismatch > N)" }
            );
        }
        out
    }
}
