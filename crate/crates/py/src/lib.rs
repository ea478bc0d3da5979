//! Python module `cfuqc`.
//!
//! Structured results cross the boundary as plain dicts and lists, built by
//! round-tripping the Rust value through JSON.

use std::path::PathBuf;

use cfuqc_core::agents::{count_primary, count_secondary, screen as run_screen, Quality};
use cfuqc_core::config::PipelineConfig;
use cfuqc_core::metrics::{self, ScreenConfusion};
use cfuqc_core::orchestrator::{ExpertVerdict, Orchestrator, Submission};
use cfuqc_core::synthgen::{self, ArtifactSpec, SceneSpec};
use cfuqc_core::vision::BBox;
use cfuqc_core::{ClassCounts, Error, ErrorCode, PlateImage};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

create_exception!(cfuqc, CfuqcError, PyException, "Base class of pipeline errors.");
create_exception!(cfuqc, ValidationError, CfuqcError);
create_exception!(cfuqc, NotFoundError, CfuqcError);
create_exception!(cfuqc, ConflictError, CfuqcError);
create_exception!(cfuqc, InsufficientDataError, CfuqcError);
create_exception!(cfuqc, StorageError, CfuqcError);

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.code() {
        ErrorCode::Validation => ValidationError::new_err(msg),
        ErrorCode::NotFound => NotFoundError::new_err(msg),
        ErrorCode::Conflict | ErrorCode::IllegalTransition => ConflictError::new_err(msg),
        ErrorCode::InsufficientData => InsufficientDataError::new_err(msg),
        ErrorCode::Storage => StorageError::new_err(msg),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for cfuqc_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| StorageError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn decode(png: &[u8]) -> PyResult<PlateImage> {
    PlateImage::from_png(png).or_py()
}

/// Renders one synthetic plate. Returns `(png_bytes, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (seed, artifact=None, intensity=0.0))]
fn generate_plate<'py>(
    py: Python<'py>,
    seed: u64,
    artifact: Option<&str>,
    intensity: f64,
) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyAny>)> {
    let artifact = match artifact {
        None | Some("none") => ArtifactSpec::NONE,
        Some(name) => {
            let kind = serde_json::from_value(serde_json::Value::from(name))
                .map_err(|_| ValidationError::new_err(format!("unknown artifact {name:?}")))?;
            ArtifactSpec::new(kind, intensity)
        }
    };
    let spec = SceneSpec {
        artifact,
        ..SceneSpec::with_seed(seed)
    };
    let (png, truth) = py
        .detach(|| synthgen::generate_plate(&spec).and_then(|(img, gt)| Ok((img.to_png()?, gt))))
        .or_py()?;
    Ok((PyBytes::new(py, &png), to_py(py, &truth)?))
}

/// Screener verdict for a PNG plate image.
#[pyfunction]
#[pyo3(signature = (png, plate_id="plate"))]
fn screen<'py>(py: Python<'py>, png: &[u8], plate_id: &str) -> PyResult<Bound<'py, PyAny>> {
    let img = decode(png)?;
    let v = py.detach(|| run_screen(plate_id, &img, &Default::default())).or_py()?;
    to_py(py, &v)
}

#[derive(Serialize)]
struct CountResult {
    screener: cfuqc_core::agents::AgentVerdict,
    counter_a: Option<cfuqc_core::agents::AgentVerdict>,
    counter_b: Option<cfuqc_core::agents::AgentVerdict>,
    decision: Option<metrics::ConsensusDecision>,
    boxes: Vec<BBox>,
}

/// Screens and, if the plate is valid, counts it with both counters and
/// applies the consensus gate. Stateless; nothing is stored.
#[pyfunction]
#[pyo3(signature = (png, delta=metrics::DEFAULT_DELTA))]
fn count<'py>(py: Python<'py>, png: &[u8], delta: f64) -> PyResult<Bound<'py, PyAny>> {
    let img = decode(png)?;
    let cfg = PipelineConfig::default();
    let result = py
        .detach(|| -> cfuqc_core::Result<CountResult> {
            let s = run_screen("plate", &img, &cfg.screener)?;
            if s.quality != Quality::Valid {
                return Ok(CountResult { screener: s, counter_a: None, counter_b: None, decision: None, boxes: Vec::new() });
            }
            let (a, boxes) = count_primary(&img, &s, &cfg.counter_a, None)?;
            let b = count_secondary(&img, &s, &cfg.counter_b)?;
            let decision = metrics::consensus(a.count.into(), b.count.into(), delta)?;
            Ok(CountResult { screener: s, counter_a: Some(a), counter_b: Some(b), decision: Some(decision), boxes })
        })
        .or_py()?;
    to_py(py, &result)
}

/// Consensus gate on two counts.
#[pyfunction]
#[pyo3(signature = (count_a, count_b, delta=metrics::DEFAULT_DELTA))]
fn consensus<'py>(py: Python<'py>, count_a: i64, count_b: i64, delta: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::consensus(count_a, count_b, delta).or_py()?)
}

/// FNR, DR, FPR and NPDR from screening confusion counts (valid is positive).
#[pyfunction]
fn screen_rates<'py>(py: Python<'py>, tp: u64, fn_: u64, fp: u64, tn: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::screen_rates(&ScreenConfusion { tp, fn_, fp, tn }).or_py()?)
}

type PyBox = (f64, f64, f64, f64, f64);

fn boxes(images: Vec<Vec<PyBox>>) -> Vec<Vec<BBox>> {
    images
        .into_iter()
        .map(|bs| bs.into_iter().map(|(x0, y0, x1, y1, s)| BBox::new(x0, y0, x1, y1).with_score(s)).collect())
        .collect()
}

/// All-point AP over images of `(x_min, y_min, x_max, y_max, score)` boxes.
#[pyfunction]
#[pyo3(signature = (detections, truths, iou_cut=0.5))]
fn map_at_iou<'py>(
    py: Python<'py>,
    detections: Vec<Vec<PyBox>>,
    truths: Vec<Vec<PyBox>>,
    iou_cut: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::map_at_iou(&boxes(detections), &boxes(truths), iou_cut).or_py()?)
}

/// A file-backed pipeline: submission, processing, review and audit.
#[pyclass(frozen, module = "cfuqc")]
struct Pipeline {
    inner: Orchestrator,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (store, delta=None, config=None))]
    fn new(py: Python<'_>, store: PathBuf, delta: Option<f64>, config: Option<PathBuf>) -> PyResult<Self> {
        let mut cfg = match config {
            Some(p) => PipelineConfig::load(&p).or_py()?,
            None => PipelineConfig::default(),
        };
        if let Some(d) = delta {
            cfg.delta = d;
        }
        let inner = py.detach(|| Orchestrator::open(store, cfg)).or_py()?;
        Ok(Pipeline { inner })
    }

    /// Stores a PNG; returns `(plate_id, created)`.
    #[pyo3(signature = (png, run_id=None, label=None))]
    fn submit(&self, py: Python<'_>, png: &[u8], run_id: Option<String>, label: Option<String>) -> PyResult<(String, bool)> {
        let sub = Submission { run_id, label, ground_truth: None };
        let (rec, created) = py.detach(|| self.inner.submit_plate(png, sub)).or_py()?;
        Ok((rec.plate_id, created))
    }

    fn process<'py>(&self, py: Python<'py>, plate_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let s = py.detach(|| self.inner.process_plate(plate_id)).or_py()?;
        to_py(py, &s)
    }

    fn plate<'py>(&self, py: Python<'py>, plate_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.plate(plate_id).or_py()?)
    }

    /// Records an expert verdict; `final_quality` is "valid" or "invalid".
    #[pyo3(signature = (plate_id, reviewer_id, final_count, final_quality="valid", note=""))]
    fn verdict<'py>(
        &self,
        py: Python<'py>,
        plate_id: &str,
        reviewer_id: &str,
        final_count: u32,
        final_quality: &str,
        note: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let quality = match final_quality {
            "valid" => Quality::Valid,
            "invalid" => Quality::Invalid,
            other => return Err(ValidationError::new_err(format!("final_quality must be valid or invalid, not {other:?}"))),
        };
        let v = ExpertVerdict {
            plate_id: plate_id.into(),
            reviewer_id: reviewer_id.into(),
            final_count,
            final_quality: quality,
            final_class_counts: ClassCounts::default(),
            note: note.into(),
            timestamp: chrono::Utc::now(),
        };
        let s = py.detach(|| self.inner.submit_expert_verdict(v)).or_py()?;
        to_py(py, &s)
    }

    fn review_queue<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.review_queue())
    }

    fn run_stats<'py>(&self, py: Python<'py>, run_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.run_stats(run_id).or_py()?)
    }

    /// Plain-text metrics tables for one run, or the whole store.
    #[pyo3(signature = (run_id=None))]
    fn report(&self, run_id: Option<&str>) -> PyResult<String> {
        let r = match run_id {
            Some(id) => self.inner.run_report(id),
            None => self.inner.store_report(),
        };
        Ok(r.or_py()?.render_text())
    }

    fn verify_audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| self.inner.store().verify_audit()).or_py()?;
        to_py(py, &r)
    }

    fn export<'py>(&self, py: Python<'py>, run_id: &str, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let s = py.detach(|| self.inner.export_qm(run_id, &out_dir)).or_py()?;
        to_py(py, &s)
    }
}

#[pymodule]
fn cfuqc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CfuqcError", py.get_type::<CfuqcError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("NotFoundError", py.get_type::<NotFoundError>())?;
    m.add("ConflictError", py.get_type::<ConflictError>())?;
    m.add("InsufficientDataError", py.get_type::<InsufficientDataError>())?;
    m.add("StorageError", py.get_type::<StorageError>())?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(generate_plate, m)?)?;
    m.add_function(wrap_pyfunction!(screen, m)?)?;
    m.add_function(wrap_pyfunction!(count, m)?)?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    m.add_function(wrap_pyfunction!(screen_rates, m)?)?;
    m.add_function(wrap_pyfunction!(map_at_iou, m)?)?;
    Ok(())
}
