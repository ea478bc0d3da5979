//! Quality-management export: NDJSON records plus a CSV mirror.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{canonical_json, validate_id};
use crate::agents::Quality;
use crate::classes::ClassCounts;
use crate::error::Result;

pub const QM_CSV_HEADER: [&str; 9] = [
    "plate_id",
    "run_id",
    "final_count",
    "final_quality",
    "bacteria",
    "mold",
    "disposition",
    "decision_trace_ids",
    "export_timestamp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Auto,
    Human,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Auto => "auto",
            Disposition::Human => "human",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmExportRecord {
    pub plate_id: String,
    pub run_id: String,
    pub final_count: u32,
    pub final_quality: Quality,
    pub class_counts: ClassCounts,
    pub disposition: Disposition,
    /// Audit sequence numbers of every event about this plate.
    pub decision_trace_ids: Vec<u64>,
    /// When the plate reached its approved state.
    pub export_timestamp: String,
}

pub fn export_paths(run_id: &str, out_dir: &Path) -> (PathBuf, PathBuf) {
    (
        out_dir.join(format!("qm_{run_id}.ndjson")),
        out_dir.join(format!("qm_{run_id}.csv")),
    )
}

/// Writes `qm_<run_id>.ndjson` and `qm_<run_id>.csv`, ordered by plate id.
pub fn write_qm_export(run_id: &str, records: &[QmExportRecord], out_dir: &Path) -> Result<(usize, PathBuf, PathBuf)> {
    validate_id("run_id", run_id)?;
    fs::create_dir_all(out_dir)?;
    let mut sorted: Vec<&QmExportRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.plate_id.cmp(&b.plate_id));

    let mut ndjson = String::new();
    for r in &sorted {
        ndjson.push_str(&canonical_json(r)?);
        ndjson.push('\n');
    }
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    csv.write_record(QM_CSV_HEADER).map_err(std::io::Error::from)?;
    for r in &sorted {
        let trace = r.decision_trace_ids.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        csv.write_record([
            r.plate_id.as_str(),
            r.run_id.as_str(),
            &r.final_count.to_string(),
            r.final_quality.as_str(),
            &r.class_counts.bacteria.to_string(),
            &r.class_counts.mold.to_string(),
            r.disposition.as_str(),
            &trace,
            &r.export_timestamp,
        ])
        .map_err(std::io::Error::from)?;
    }
    let csv_bytes = csv.into_inner().map_err(|e| e.into_error())?;

    let (json_path, csv_path) = export_paths(run_id, out_dir);
    fs::write(&json_path, ndjson)?;
    fs::write(&csv_path, csv_bytes)?;
    Ok((sorted.len(), json_path, csv_path))
}
