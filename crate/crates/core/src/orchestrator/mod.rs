//! The plate workflow: screen, count twice, gate on consensus, escalate to
//! a reviewer, take the verdict, and feed corrections back.
//!
//! Every state change is a [`PlateEvent`] committed to the audit log in
//! the same segment as any records it produces, so replaying the log
//! rebuilds every [`PlateState`] exactly.

mod calibrate;
mod state;
mod stats;

pub use calibrate::{
    peak_height_grid, recalibrate, threshold_grid, CalibrationUpdate, FeedbackLoss, FeedbackSample, ParamChange,
    MIN_FEEDBACK_ROWS,
};
pub use state::{
    Escalation, EscalationCause, ExpertVerdict, Latency, PlateEvent, PlateState, StateKind, Transition,
};
pub use stats::RunStats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{count_primary, count_secondary, screen_stats, AgentKind, Quality};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::report::{DetectionRow, MetricsReport, ScreeningRow};
use crate::metrics::{consensus, map_at_iou, screen_rates, Outcome, ScreenConfusion, Table3Row};
use crate::raster::PlateImage;
use crate::registry::{Model, PromotionLog, PromotionRecord};
use crate::store::{
    audit, sha256_hex, validate_id, write_qm_export, AuditEvent, Disposition, EventDraft, QmExportRecord, RecordFile,
    Segment, Store,
};
use crate::synthgen::GroundTruth;

pub const DEFAULT_RUN: &str = "default";

/// Hex digits of the image hash used as the plate id.
const PLATE_ID_HEX: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateRecord {
    pub plate_id: String,
    pub run_id: String,
    pub image_sha256: String,
    /// Caller's own name for the plate, e.g. a manifest id.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default)]
pub struct Submission {
    pub run_id: Option<String>,
    pub label: Option<String>,
    pub ground_truth: Option<GroundTruth>,
}

/// One reviewed plate, kept for recalibration and drift reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub plate_id: String,
    pub run_id: String,
    pub image_sha256: String,
    pub cause: EscalationCause,
    pub count_a: Option<u32>,
    pub count_b: Option<u32>,
    pub verdict: ExpertVerdict,
}

/// An escalated plate as a reviewer sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub plate_id: String,
    pub run_id: String,
    pub cause: EscalationCause,
    pub reason: String,
    /// Set for screener escalations.
    pub screener_reason: Option<String>,
    pub count_a: Option<u32>,
    pub count_b: Option<u32>,
    pub relative_delta: Option<f64>,
    pub escalated_at: DateTime<Utc>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ConfigRecord {
    Proposed { update: CalibrationUpdate },
    Applied { version: u32, config: PipelineConfig },
}

#[derive(Debug)]
struct Entry {
    record: PlateRecord,
    state: PlateState,
    /// Audit sequence numbers of this plate's events.
    trace: Vec<u64>,
}

#[derive(Debug, Default)]
struct Registry {
    log: PromotionLog,
    model: Option<Model>,
}

pub struct Orchestrator {
    store: Store,
    config: RwLock<PipelineConfig>,
    registry: RwLock<Registry>,
    plates: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
    runs: RwLock<BTreeMap<String, Vec<String>>>,
    proposals: Mutex<BTreeMap<u32, CalibrationUpdate>>,
    submit_lock: Mutex<()>,
}

fn plate_payload(plate_id: &str, event: &PlateEvent) -> Result<Value> {
    Ok(json!({ "plate_id": plate_id, "change": serde_json::to_value(event)? }))
}

/// Splits a plate audit event into its plate id and change.
fn plate_change(e: &AuditEvent) -> Option<(String, PlateEvent)> {
    let id = e.payload.get("plate_id")?.as_str()?.to_string();
    let change = serde_json::from_value(e.payload.get("change")?.clone()).ok()?;
    Some((id, change))
}

/// Rebuilds every plate's state from an audit log.
pub fn replay_states(events: &[AuditEvent]) -> Result<BTreeMap<String, PlateState>> {
    Ok(replay_with_trace(events)?.into_iter().map(|(k, (s, _))| (k, s)).collect())
}

fn replay_with_trace(events: &[AuditEvent]) -> Result<BTreeMap<String, (PlateState, Vec<u64>)>> {
    let mut out: BTreeMap<String, (PlateState, Vec<u64>)> = BTreeMap::new();
    for e in events {
        let Some((id, change)) = plate_change(e) else { continue };
        let at = e.at()?;
        match (&change, out.get_mut(&id)) {
            (PlateEvent::Received { run_id, .. }, None) => {
                out.insert(id.clone(), (PlateState::received(&id, run_id, at), vec![e.sequence_no]));
            }
            (_, Some((state, trace))) => {
                state.apply(&change, at).map_err(|err| {
                    Error::Storage(format!("audit event {} does not replay: {err}", e.sequence_no))
                })?;
                trace.push(e.sequence_no);
            }
            (_, None) => {
                return Err(Error::Storage(format!(
                    "audit event {} refers to unknown plate {id}",
                    e.sequence_no
                )))
            }
        }
    }
    Ok(out)
}

fn escalation_reason(a: u32, b: u32, rel: f64, delta: f64) -> String {
    format!(
        "counts disagree: counter_a {a} vs counter_b {b}, relative delta {:.1}% > {:.1}%",
        100.0 * rel,
        100.0 * delta
    )
}

impl Orchestrator {
    /// Opens the store at `root` and rebuilds all state from it. A recorded
    /// recalibration overrides the thresholds of `base`.
    pub fn open(root: impl Into<PathBuf>, base: PipelineConfig) -> Result<Orchestrator> {
        base.validate()?;
        let store = Store::open(root)?;

        let records: Vec<PlateRecord> = store.read_records(RecordFile::Plates)?;
        let events = store.read_audit()?;
        let mut replayed = replay_with_trace(&events)?;
        let mut plates = BTreeMap::new();
        let mut runs: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in &events {
            if e.action == "run_opened" {
                if let Some(r) = e.payload.get("run_id").and_then(Value::as_str) {
                    runs.entry(r.to_string()).or_default();
                }
            }
        }
        for rec in records {
            let Some((state, trace)) = replayed.remove(&rec.plate_id) else {
                // Record written but its audit segment never landed: not acknowledged.
                continue;
            };
            runs.entry(rec.run_id.clone()).or_default().push(rec.plate_id.clone());
            plates.insert(rec.plate_id.clone(), Arc::new(Mutex::new(Entry { record: rec, state, trace })));
        }

        let mut config = base;
        let mut proposals = BTreeMap::new();
        for r in store.read_records::<ConfigRecord>(RecordFile::Configs)? {
            match r {
                ConfigRecord::Proposed { update } => {
                    proposals.insert(update.version, update);
                }
                ConfigRecord::Applied { version, config: applied } => {
                    config.version = version;
                    config.counter_a.threshold = applied.counter_a.threshold;
                    config.counter_b.peak_height = applied.counter_b.peak_height;
                }
            }
        }

        let log = PromotionLog::replay(store.read_records::<PromotionRecord>(RecordFile::Promotions)?)?;
        let model = log.current().and_then(|r| r.model.clone());

        Ok(Orchestrator {
            store,
            config: RwLock::new(config),
            registry: RwLock::new(Registry { log, model }),
            plates: RwLock::new(plates),
            runs: RwLock::new(runs),
            proposals: Mutex::new(proposals),
            submit_lock: Mutex::new(()),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> PipelineConfig {
        self.config.read().expect("config lock").clone()
    }

    pub fn classifier(&self) -> Option<Model> {
        self.registry.read().expect("registry lock").model.clone()
    }

    pub fn promotions(&self) -> Vec<PromotionRecord> {
        self.registry.read().expect("registry lock").log.records().to_vec()
    }

    fn entry(&self, plate_id: &str) -> Result<Arc<Mutex<Entry>>> {
        self.plates
            .read()
            .expect("plates lock")
            .get(plate_id)
            .cloned()
            .ok_or_else(|| Error::not_found("plate", plate_id))
    }

    pub fn plate(&self, plate_id: &str) -> Result<PlateState> {
        Ok(self.entry(plate_id)?.lock().expect("plate lock").state.clone())
    }

    pub fn plate_record(&self, plate_id: &str) -> Result<PlateRecord> {
        Ok(self.entry(plate_id)?.lock().expect("plate lock").record.clone())
    }

    pub fn plate_trace(&self, plate_id: &str) -> Result<Vec<u64>> {
        Ok(self.entry(plate_id)?.lock().expect("plate lock").trace.clone())
    }

    pub fn plate_image(&self, plate_id: &str) -> Result<Vec<u8>> {
        let sha = self.plate_record(plate_id)?.image_sha256;
        self.store.image(&sha)
    }

    /// All plate states keyed by id.
    pub fn states(&self) -> BTreeMap<String, PlateState> {
        let entries: Vec<_> = self.plates.read().expect("plates lock").values().cloned().collect();
        entries
            .iter()
            .map(|e| {
                let e = e.lock().expect("plate lock");
                (e.record.plate_id.clone(), e.state.clone())
            })
            .collect()
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.runs.read().expect("runs lock").keys().cloned().collect()
    }

    pub fn run_plates(&self, run_id: &str) -> Result<Vec<String>> {
        self.runs
            .read()
            .expect("runs lock")
            .get(run_id)
            .cloned()
            .ok_or_else(|| Error::not_found("run", run_id))
    }

    /// Registers an empty run; a no-op if it exists.
    pub fn open_run(&self, run_id: &str) -> Result<()> {
        validate_id("run_id", run_id)?;
        let _guard = self.submit_lock.lock().expect("submit lock");
        if self.runs.read().expect("runs lock").contains_key(run_id) {
            return Ok(());
        }
        self.store
            .append_audit(EventDraft::new("system", "run_opened", json!({ "run_id": run_id })))?;
        self.runs.write().expect("runs lock").insert(run_id.into(), Vec::new());
        Ok(())
    }

    /// Stores a PNG and registers the plate. Resubmitting the same bytes
    /// returns the existing record with `created = false`.
    pub fn submit_plate(&self, png: &[u8], sub: Submission) -> Result<(PlateRecord, bool)> {
        let run_id = sub.run_id.unwrap_or_else(|| DEFAULT_RUN.into());
        validate_id("run_id", &run_id)?;
        PlateImage::from_png(png)?;
        let sha = sha256_hex(png);
        let plate_id = sha[..PLATE_ID_HEX].to_string();

        let _guard = self.submit_lock.lock().expect("submit lock");
        if let Ok(existing) = self.entry(&plate_id) {
            let e = existing.lock().expect("plate lock");
            if e.record.image_sha256 != sha {
                return Err(Error::Conflict(format!("plate id {plate_id} collides with another image")));
            }
            return Ok((e.record.clone(), false));
        }
        self.store.put_image(png)?;

        let mut seg = Segment::new(Utc::now());
        let at = seg.at();
        let new_run = !self.runs.read().expect("runs lock").contains_key(&run_id);
        if new_run {
            seg.event(EventDraft::new("system", "run_opened", json!({ "run_id": run_id })));
        }
        let record = PlateRecord {
            plate_id: plate_id.clone(),
            run_id: run_id.clone(),
            image_sha256: sha.clone(),
            label: sub.label,
            ground_truth: sub.ground_truth,
            submitted_at: at,
        };
        let change = PlateEvent::Received {
            run_id: run_id.clone(),
            image_sha256: sha,
        };
        seg.record(RecordFile::Plates, &record)?;
        seg.event(EventDraft::new(change.actor(), change.action(), plate_payload(&plate_id, &change)?));
        let events = self.store.commit(seg)?;

        let entry = Entry {
            record: record.clone(),
            state: PlateState::received(&plate_id, &run_id, at),
            trace: vec![events.last().expect("received event").sequence_no],
        };
        self.plates
            .write()
            .expect("plates lock")
            .insert(plate_id.clone(), Arc::new(Mutex::new(entry)));
        self.runs.write().expect("runs lock").entry(run_id).or_default().push(plate_id);
        Ok((record, true))
    }

    /// Applies `changes` to a copy of the plate, commits them, then publishes.
    fn commit_changes(
        &self,
        entry: &mut Entry,
        changes: Vec<PlateEvent>,
        mut seg: Segment,
    ) -> Result<PlateState> {
        let at = seg.at();
        let mut next = entry.state.clone();
        for c in &changes {
            next.apply(c, at)?;
            seg.event(EventDraft::new(c.actor(), c.action(), plate_payload(&next.plate_id, c)?));
        }
        if next.state.is_approved() {
            seg.record(
                RecordFile::QmOutbox,
                &json!({
                    "plate_id": next.plate_id,
                    "run_id": next.run_id,
                    "state": next.state,
                    "final_count": next.final_count(),
                    "at": audit::format_timestamp(at),
                }),
            )?;
        }
        let events = self.store.commit(seg)?;
        entry.trace.extend(events.iter().map(|e| e.sequence_no));
        entry.state = next;
        Ok(entry.state.clone())
    }

    /// Runs the plate through screening, both counters and the consensus gate.
    pub fn process_plate(&self, plate_id: &str) -> Result<PlateState> {
        let handle = self.entry(plate_id)?;
        let mut entry = handle.lock().expect("plate lock");
        if entry.state.state != StateKind::Received {
            return Err(Error::IllegalTransition {
                plate_id: plate_id.into(),
                from: entry.state.state.as_str().into(),
                to: "SCREENED".into(),
            });
        }
        let png = self.store.image(&entry.record.image_sha256)?;
        let image = PlateImage::from_png(&png)?;
        let cfg = self.config();
        let model = self.classifier();

        let start = Instant::now();
        let (screen, stats) = screen_stats(plate_id, &image, &cfg.screener)?;
        let mut changes = vec![PlateEvent::Screened {
            verdict: screen.clone(),
            stats,
        }];
        if screen.quality == Quality::Invalid {
            changes.push(PlateEvent::Escalated {
                escalation: Escalation {
                    cause: EscalationCause::Invalid,
                    reason: screen.reason.clone(),
                },
            });
            return self.commit_changes(&mut entry, changes, Segment::new(Utc::now()));
        }

        let count_start = Instant::now();
        let (primary, secondary) = rayon::join(
            || count_primary(&image, &screen, &cfg.counter_a, model.as_ref()),
            || count_secondary(&image, &screen, &cfg.counter_b),
        );
        let (verdict_a, boxes) = primary?;
        let verdict_b = secondary?;
        let latency = Latency {
            screen_ms: screen.elapsed_ms,
            count_ms: count_start.elapsed().as_secs_f64() * 1e3,
            total_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        let (a, b) = (verdict_a.count, verdict_b.count);
        changes.push(PlateEvent::CounterVerdict {
            verdict: verdict_a,
            boxes,
        });
        changes.push(PlateEvent::CounterVerdict {
            verdict: verdict_b,
            boxes: Vec::new(),
        });
        changes.push(PlateEvent::Counted { latency });

        if latency.total_ms > cfg.latency_budget_ms as f64 {
            changes.push(PlateEvent::Escalated {
                escalation: Escalation {
                    cause: EscalationCause::Latency,
                    reason: format!(
                        "latency: {:.1} ms exceeds the {} ms budget",
                        latency.total_ms, cfg.latency_budget_ms
                    ),
                },
            });
        } else {
            let decision = consensus(a as i64, b as i64, cfg.delta)?;
            changes.push(PlateEvent::Consensus { decision });
            changes.push(match decision.outcome {
                Outcome::AutoApprove => PlateEvent::AutoApproved,
                Outcome::Escalate => PlateEvent::Escalated {
                    escalation: Escalation {
                        cause: EscalationCause::Mismatch,
                        reason: escalation_reason(a, b, decision.relative_delta, cfg.delta),
                    },
                },
            });
        }
        self.commit_changes(&mut entry, changes, Segment::new(Utc::now()))
    }

    /// Records a reviewer's decision on an escalated plate.
    pub fn submit_expert_verdict(&self, verdict: ExpertVerdict) -> Result<PlateState> {
        let handle = self.entry(&verdict.plate_id)?;
        let mut entry = handle.lock().expect("plate lock");
        let current = entry.state.state;
        if matches!(current, StateKind::HumanApproved | StateKind::HumanRejected) {
            return Err(Error::Conflict(format!("plate {} already has an expert verdict", verdict.plate_id)));
        }
        if current != StateKind::Escalated {
            return Err(Error::IllegalTransition {
                plate_id: verdict.plate_id.clone(),
                from: current.as_str().into(),
                to: match verdict.final_quality {
                    Quality::Valid => StateKind::HumanApproved.as_str().into(),
                    Quality::Invalid => StateKind::HumanRejected.as_str().into(),
                },
            });
        }
        verdict.validate()?;
        let mut verdict = verdict;
        verdict.timestamp = audit::truncate_to_micros(verdict.timestamp);

        let mut seg = Segment::new(Utc::now());
        let s = &entry.state;
        let row = FeedbackRow {
            plate_id: s.plate_id.clone(),
            run_id: s.run_id.clone(),
            image_sha256: entry.record.image_sha256.clone(),
            cause: s.escalation.as_ref().map_or(EscalationCause::Invalid, |e| e.cause),
            count_a: s.verdict(AgentKind::CounterA).map(|v| v.count),
            count_b: s.verdict(AgentKind::CounterB).map(|v| v.count),
            verdict: verdict.clone(),
        };
        seg.record(RecordFile::Feedback, &row)?;
        self.commit_changes(&mut entry, vec![PlateEvent::Adjudicated { verdict }], seg)
    }

    pub fn feedback(&self) -> Result<Vec<FeedbackRow>> {
        self.store.read_records(RecordFile::Feedback)
    }

    /// Escalated plates awaiting review, oldest escalation first.
    pub fn review_queue(&self) -> Vec<ReviewItem> {
        let entries: Vec<_> = self.plates.read().expect("plates lock").values().cloned().collect();
        let mut items: Vec<ReviewItem> = entries
            .iter()
            .filter_map(|h| {
                let e = h.lock().expect("plate lock");
                let s = &e.state;
                if s.state != StateKind::Escalated {
                    return None;
                }
                let esc = s.escalation.clone()?;
                let screener_reason = (esc.cause == EscalationCause::Invalid)
                    .then(|| s.verdict(AgentKind::Screener).map(|v| v.reason.clone()))
                    .flatten();
                Some(ReviewItem {
                    plate_id: s.plate_id.clone(),
                    run_id: s.run_id.clone(),
                    cause: esc.cause,
                    reason: esc.reason,
                    screener_reason,
                    count_a: s.verdict(AgentKind::CounterA).map(|v| v.count),
                    count_b: s.verdict(AgentKind::CounterB).map(|v| v.count),
                    relative_delta: s.decision.map(|d| d.relative_delta),
                    escalated_at: s.entered_at(StateKind::Escalated)?,
                    submitted_at: e.record.submitted_at,
                })
            })
            .collect();
        items.sort_by(|a, b| a.escalated_at.cmp(&b.escalated_at).then_with(|| a.plate_id.cmp(&b.plate_id)));
        items
    }

    fn run_states(&self, run_id: &str) -> Result<Vec<(PlateRecord, PlateState, Vec<u64>)>> {
        let ids = self.run_plates(run_id)?;
        ids.iter()
            .map(|id| {
                let h = self.entry(id)?;
                let e = h.lock().expect("plate lock");
                Ok((e.record.clone(), e.state.clone(), e.trace.clone()))
            })
            .collect()
    }

    pub fn run_stats(&self, run_id: &str) -> Result<RunStats> {
        let rows = self.run_states(run_id)?;
        Ok(RunStats::from_states(run_id, rows.iter().map(|(_, s, _)| s)))
    }

    /// Detection, screening and count-validation tables for one run.
    ///
    /// Rows that need ground truth use the synthetic truth attached at
    /// submission; count validation prefers the expert's count where one exists.
    pub fn run_report(&self, run_id: &str) -> Result<MetricsReport> {
        let rows = self.run_states(run_id)?;
        build_report(rows.iter().map(|(r, s, _)| (r, s)))
    }

    /// Report over every plate in the store.
    pub fn store_report(&self) -> Result<MetricsReport> {
        let entries: Vec<_> = self.plates.read().expect("plates lock").values().cloned().collect();
        let rows: Vec<(PlateRecord, PlateState)> = entries
            .iter()
            .map(|h| {
                let e = h.lock().expect("plate lock");
                (e.record.clone(), e.state.clone())
            })
            .collect();
        build_report(rows.iter().map(|(r, s)| (r, s)))
    }

    /// Writes the approved plates of a finished run as NDJSON and CSV.
    pub fn export_qm(&self, run_id: &str, out_dir: &Path) -> Result<ExportSummary> {
        let rows = self.run_states(run_id)?;
        let pending: Vec<&str> = rows
            .iter()
            .filter(|(_, s, _)| !s.state.is_terminal())
            .map(|(_, s, _)| s.plate_id.as_str())
            .collect();
        if !pending.is_empty() {
            return Err(Error::Precondition(format!(
                "run {run_id} is incomplete: {} plate(s) not terminal, e.g. {}",
                pending.len(),
                pending[0]
            )));
        }
        let mut records = Vec::new();
        for (_, s, trace) in &rows {
            if !s.state.is_approved() {
                continue;
            }
            let (disposition, class_counts) = match (&s.expert, s.state) {
                (Some(v), StateKind::HumanApproved) => (Disposition::Human, v.final_class_counts),
                _ => (Disposition::Auto, s.class_counts()),
            };
            let at = s.entered_at(s.state).expect("terminal state has a transition");
            records.push(QmExportRecord {
                plate_id: s.plate_id.clone(),
                run_id: run_id.into(),
                final_count: s.final_count().expect("approved plate has a count"),
                final_quality: Quality::Valid,
                class_counts,
                disposition,
                decision_trace_ids: trace.clone(),
                export_timestamp: audit::format_timestamp(at),
            });
        }
        let (n, ndjson, csv) = write_qm_export(run_id, &records, out_dir)?;
        let digest = sha256_hex(&std::fs::read(&ndjson)?);
        self.store.append_audit(EventDraft::new(
            "system",
            "qm_exported",
            json!({ "run_id": run_id, "records": n, "ndjson_sha256": digest }),
        ))?;
        Ok(ExportSummary {
            run_id: run_id.into(),
            records: n,
            ndjson,
            csv,
        })
    }

    /// Grid-searches counter thresholds on the valid feedback rows and
    /// records the proposal. Nothing changes until [`Self::apply_recalibration`].
    pub fn propose_recalibration(&self) -> Result<CalibrationUpdate> {
        let rows: Vec<FeedbackRow> = self
            .feedback()?
            .into_iter()
            .filter(|r| r.verdict.final_quality == Quality::Valid)
            .collect();
        if rows.len() < MIN_FEEDBACK_ROWS {
            return Err(Error::insufficient("recalibration feedback rows", MIN_FEEDBACK_ROWS, rows.len()));
        }
        let samples = rows
            .iter()
            .map(|r| {
                Ok(FeedbackSample {
                    plate_id: r.plate_id.clone(),
                    image: PlateImage::from_png(&self.store.image(&r.image_sha256)?)?,
                    expert_count: r.verdict.final_count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = self.config();
        let update = recalibrate(&samples, &cfg, self.classifier().as_ref())?;

        let mut proposals = self.proposals.lock().expect("proposals lock");
        let mut seg = Segment::new(Utc::now());
        seg.record(RecordFile::Configs, &ConfigRecord::Proposed { update: update.clone() })?;
        seg.event(EventDraft::new("system", "config_proposed", serde_json::to_value(&update)?));
        self.store.commit(seg)?;
        proposals.insert(update.version, update.clone());
        Ok(update)
    }

    /// Activates a proposed configuration. It must have been computed
    /// against the configuration currently in force.
    pub fn apply_recalibration(&self, version: u32) -> Result<PipelineConfig> {
        let proposals = self.proposals.lock().expect("proposals lock");
        let update = proposals
            .get(&version)
            .ok_or_else(|| Error::not_found("calibration proposal", version.to_string()))?;
        let mut cfg = self.config.write().expect("config lock");
        if update.from_version != cfg.version {
            return Err(Error::Conflict(format!(
                "proposal {version} was computed against config {} but {} is active",
                update.from_version, cfg.version
            )));
        }
        let mut next = cfg.clone();
        next.version = update.version;
        next.counter_a.threshold = update.config.counter_a.threshold;
        next.counter_b.peak_height = update.config.counter_b.peak_height;

        let mut seg = Segment::new(Utc::now());
        let applied = ConfigRecord::Applied {
            version: next.version,
            config: next.clone(),
        };
        seg.record(RecordFile::Configs, &applied)?;
        seg.event(EventDraft::new(
            "system",
            "config_applied",
            json!({
                "version": next.version,
                "counter_a_threshold": next.counter_a.threshold,
                "counter_b_peak_height": next.counter_b.peak_height,
            }),
        ));
        self.store.commit(seg)?;
        *cfg = next.clone();
        Ok(next)
    }

    /// Installs a promoted classifier for the primary counter's boxes.
    pub fn record_promotion(&self, record: PromotionRecord) -> Result<()> {
        let mut reg = self.registry.write().expect("registry lock");
        let mut log = reg.log.clone();
        log.append(record.clone())?;
        let mut seg = Segment::new(Utc::now());
        seg.record(RecordFile::Promotions, &record)?;
        seg.event(EventDraft::new(
            "system",
            "model_promoted",
            json!({
                "candidate_id": record.candidate_id.as_str(),
                "balanced_f1": record.report.balanced_f1,
                "reason": record.reason,
            }),
        ));
        self.store.commit(seg)?;
        reg.log = log;
        reg.model = record.model;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub run_id: String,
    pub records: usize,
    pub ndjson: PathBuf,
    pub csv: PathBuf,
}

fn build_report<'a>(rows: impl Iterator<Item = (&'a PlateRecord, &'a PlateState)>) -> Result<MetricsReport> {
    let mut detections = Vec::new();
    let mut truths = Vec::new();
    let mut screening = Vec::new();
    let mut tally = [(0u64, 0u64); 2];
    for (rec, s) in rows {
        let gt = rec.ground_truth.as_ref();
        if let (Some(gt), Some(screen)) = (gt, s.verdict(AgentKind::Screener)) {
            screening.push((gt.valid, screen.quality == Quality::Valid));
        }
        if let Some(gt) = gt {
            if s.verdict(AgentKind::CounterA).is_some() {
                detections.push(s.boxes.clone());
                truths.push(gt.colonies.iter().map(|c| c.bbox()).collect::<Vec<_>>());
            }
        }
        let reference = match &s.expert {
            Some(v) if v.final_quality == Quality::Valid => Some(v.final_count),
            Some(_) => None,
            None => gt.filter(|g| g.valid).map(|g| g.true_count),
        };
        if let Some(r) = reference {
            for (i, agent) in [AgentKind::CounterA, AgentKind::CounterB].into_iter().enumerate() {
                if let Some(v) = s.verdict(agent) {
                    tally[i].1 += 1;
                    if v.count == r {
                        tally[i].0 += 1;
                    }
                }
            }
        }
    }
    let mut report = MetricsReport::default();
    if !detections.is_empty() {
        report.detection.push(DetectionRow {
            label: "counter_a".into(),
            summary: map_at_iou(&detections, &truths, 0.5)?,
        });
    }
    if let Ok(rates) = screen_rates(&ScreenConfusion::tally(screening.iter().copied())) {
        report.screening.push(ScreeningRow {
            label: "screener".into(),
            samples: screening.len() as u64,
            rates,
        });
    }
    for (i, label) in ["counter_a", "counter_b"].into_iter().enumerate() {
        let (matched, total) = tally[i];
        if total > 0 {
            report
                .count_validation
                .push(Table3Row::new(label, matched, total - matched, total)?);
        }
    }
    Ok(report)
}

