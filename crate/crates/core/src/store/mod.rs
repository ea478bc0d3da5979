//! File-backed persistence: content-addressed images, append-only NDJSON
//! record files, and the hash-chained audit log.
//!
//! Layout under the store root:
//!
//! ```text
//! images/<sha256>.png
//! plates.ndjson  feedback.ndjson  promotions.ndjson  configs.ndjson  qm_outbox.ndjson
//! audit.ndjson   one canonical AuditEvent per line
//! audit.head     {"events": n, "head": "<hex>"}, rewritten after every commit
//! ```
//!
//! Every mutation goes through [`Store::commit`], which appends its record
//! lines and then its audit events under one lock and syncs both before
//! returning.

pub mod audit;
mod export;

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use audit::{canonical_json, verify_bytes, AuditEvent, EventDraft, VerifyReport, GENESIS_HASH};
pub use export::{export_paths, write_qm_export, Disposition, QmExportRecord, QM_CSV_HEADER};

use crate::error::{Error, Result};

pub const AUDIT_FILE: &str = "audit.ndjson";
pub const AUDIT_HEAD_FILE: &str = "audit.head";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordFile {
    Plates,
    Feedback,
    Promotions,
    Configs,
    QmOutbox,
}

impl RecordFile {
    pub const ALL: [RecordFile; 5] = [
        RecordFile::Plates,
        RecordFile::Feedback,
        RecordFile::Promotions,
        RecordFile::Configs,
        RecordFile::QmOutbox,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            RecordFile::Plates => "plates.ndjson",
            RecordFile::Feedback => "feedback.ndjson",
            RecordFile::Promotions => "promotions.ndjson",
            RecordFile::Configs => "configs.ndjson",
            RecordFile::QmOutbox => "qm_outbox.ndjson",
        }
    }
}

/// Identifiers that end up in file names: 1 to 64 of `[A-Za-z0-9_.-]`, not starting with a dot.
pub fn validate_id(field: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::validation(field, "must be 1-64 characters of [A-Za-z0-9_.-], not starting with '.'"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One atomic unit of writes: record lines first, then chained audit events.
#[derive(Debug, Clone)]
pub struct Segment {
    at: DateTime<Utc>,
    records: Vec<(RecordFile, String)>,
    events: Vec<EventDraft>,
}

impl Segment {
    pub fn new(at: DateTime<Utc>) -> Self {
        Segment {
            at: audit::truncate_to_micros(at),
            records: Vec::new(),
            events: Vec::new(),
        }
    }

    /// The segment's timestamp, already at audit precision.
    pub fn at(&self) -> DateTime<Utc> {
        self.at
    }

    pub fn record<T: Serialize>(&mut self, file: RecordFile, value: &T) -> Result<()> {
        self.records.push((file, canonical_json(value)?));
        Ok(())
    }

    pub fn event(&mut self, draft: EventDraft) {
        self.events.push(draft);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.events.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Head {
    events: u64,
    head: String,
}

#[derive(Debug)]
struct Writer {
    next_seq: u64,
    head: [u8; 32],
    audit_len: u64,
    /// Set when the log on disk disagrees with the index; appends are refused.
    fault: Option<String>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    writer: Mutex<Writer>,
}

fn sync_dir(dir: &Path) {
    // Directory fsync is best effort; not every platform allows opening a directory.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(parent) = path.parent() {
        sync_dir(parent);
    }
    Ok(())
}

/// Cuts an unterminated trailing line left by a crash mid-append.
fn trim_torn_tail(path: &Path) -> Result<()> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    f.sync_all()?;
    Ok(())
}

impl Store {
    /// Opens or creates a store. A log that is shorter than its index or
    /// fails verification leaves the store readable but refuses appends.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        fs::create_dir_all(root.join(IMAGES_DIR))
            .map_err(|e| Error::Storage(format!("cannot create {}: {e}", root.display())))?;
        for f in RecordFile::ALL {
            trim_torn_tail(&root.join(f.file_name()))?;
        }
        let bytes = read_or_empty(&root.join(AUDIT_FILE))?;
        let head = read_head(&root)?;
        let expected = head.as_ref().map_or(0, |h| h.events);
        let report = audit::verify_bytes(&bytes, expected);

        let mut fault = None;
        if !report.ok {
            fault = Some(format!(
                "audit log fails verification at sequence {}",
                report.first_bad_sequence_no.unwrap_or(0)
            ));
        } else if report.events < expected {
            fault = Some(format!(
                "audit log holds {} events but the index records {expected}: sequence gap",
                report.events
            ));
        }
        let mut last = GENESIS_HASH;
        if report.ok && report.events > 0 {
            let last_line = bytes[..bytes.len() - 1]
                .rsplit(|&b| b == b'\n')
                .next()
                .expect("non-empty log has a last line");
            let event: AuditEvent = serde_json::from_slice(last_line)?;
            last = event.this_hash_bytes()?;
        }
        if report.ok && report.events == expected {
            if let Some(h) = &head {
                if h.head != hex::encode(last) {
                    fault = Some("audit head hash differs from the index".into());
                }
            }
        }
        let store = Store {
            root,
            writer: Mutex::new(Writer {
                next_seq: report.events,
                head: last,
                audit_len: bytes.len() as u64,
                fault,
            }),
        };
        // The head write is the last step of a commit; a crash just before it
        // leaves a longer, intact log, which is caught up here.
        if report.ok && report.events > expected {
            store.write_head(report.events, &last)?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Why appends are refused, if they are.
    pub fn fault(&self) -> Option<String> {
        self.writer.lock().expect("store lock").fault.clone()
    }

    pub fn audit_len(&self) -> u64 {
        self.writer.lock().expect("store lock").next_seq
    }

    fn write_head(&self, events: u64, head: &[u8; 32]) -> Result<()> {
        let h = Head {
            events,
            head: hex::encode(head),
        };
        write_atomic(&self.root.join(AUDIT_HEAD_FILE), canonical_json(&h)?.as_bytes())
    }

    /// Writes a segment durably and returns its sealed audit events.
    pub fn commit(&self, segment: Segment) -> Result<Vec<AuditEvent>> {
        let mut w = self.writer.lock().expect("store lock");
        if let Some(f) = &w.fault {
            return Err(Error::Storage(format!("store refuses appends: {f}")));
        }
        for file in RecordFile::ALL {
            let lines: Vec<&str> = segment
                .records
                .iter()
                .filter(|(f, _)| *f == file)
                .map(|(_, l)| l.as_str())
                .collect();
            if lines.is_empty() {
                continue;
            }
            let mut buf = String::new();
            for l in lines {
                buf.push_str(l);
                buf.push('\n');
            }
            append_synced(&self.root.join(file.file_name()), buf.as_bytes())?;
        }

        let mut events = Vec::with_capacity(segment.events.len());
        let mut prev = w.head;
        let mut buf = String::new();
        for (i, draft) in segment.events.into_iter().enumerate() {
            let e = AuditEvent::seal(w.next_seq + i as u64, segment.at, &prev, draft)?;
            prev = e.this_hash_bytes()?;
            buf.push_str(&e.to_line()?);
            buf.push('\n');
            events.push(e);
        }
        if events.is_empty() {
            return Ok(events);
        }
        let path = self.root.join(AUDIT_FILE);
        if let Err(e) = append_synced(&path, buf.as_bytes()) {
            // Roll back a partial append so the failed events stay invisible.
            if let Ok(f) = OpenOptions::new().write(true).open(&path) {
                let _ = f.set_len(w.audit_len);
            }
            return Err(Error::Storage(format!("audit append failed: {e}")));
        }
        w.audit_len += buf.len() as u64;
        w.next_seq += events.len() as u64;
        w.head = prev;
        self.write_head(w.next_seq, &prev)?;
        Ok(events)
    }

    /// Appends a single event on its own.
    pub fn append_audit(&self, draft: EventDraft) -> Result<AuditEvent> {
        let mut seg = Segment::new(Utc::now());
        seg.event(draft);
        Ok(self.commit(seg)?.remove(0))
    }

    pub fn read_audit(&self) -> Result<Vec<AuditEvent>> {
        let bytes = read_or_empty(&self.root.join(AUDIT_FILE))?;
        bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).map_err(|e| Error::Storage(format!("unreadable audit line: {e}"))))
            .collect()
    }

    /// Recomputes the whole chain and compares its length with the index.
    pub fn verify_audit(&self) -> Result<VerifyReport> {
        let path = self.root.join(AUDIT_FILE);
        let bytes = read_or_empty(&path).map_err(|e| Error::Storage(format!("cannot read audit log: {e}")))?;
        let expected = match read_head(&self.root)? {
            Some(h) => h.events,
            None => self.audit_len(),
        };
        Ok(audit::verify_bytes(&bytes, expected))
    }

    pub fn read_records<T: DeserializeOwned>(&self, file: RecordFile) -> Result<Vec<T>> {
        let bytes = read_or_empty(&self.root.join(file.file_name()))?;
        bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| {
                serde_json::from_slice(l)
                    .map_err(|e| Error::Storage(format!("unreadable line in {}: {e}", file.file_name())))
            })
            .collect()
    }

    fn image_path(&self, sha: &str) -> PathBuf {
        self.root.join(IMAGES_DIR).join(format!("{sha}.png"))
    }

    /// Stores image bytes under their SHA-256; storing the same bytes again is a no-op.
    pub fn put_image(&self, bytes: &[u8]) -> Result<String> {
        let sha = sha256_hex(bytes);
        let path = self.image_path(&sha);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(sha)
    }

    pub fn image(&self, sha: &str) -> Result<Vec<u8>> {
        if sha.len() != 64 || !sha.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::not_found("image", sha));
        }
        match fs::read(self.image_path(sha)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::not_found("image", sha)),
            Err(e) => Err(e.into()),
        }
    }
}

fn append_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(bytes)?;
    f.sync_data()?;
    Ok(())
}

fn read_or_empty(path: &Path) -> Result<Vec<u8>> {
    match File::open(path) {
        Ok(mut f) => {
            let mut buf = Vec::new();
            f.read_to_end(&mut buf)?;
            Ok(buf)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

fn read_head(root: &Path) -> Result<Option<Head>> {
    let bytes = read_or_empty(&root.join(AUDIT_HEAD_FILE))?;
    if bytes.is_empty() {
        return Ok(None);
    }
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| Error::Storage(format!("unreadable {AUDIT_HEAD_FILE}: {e}")))
}
