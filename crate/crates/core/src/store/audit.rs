//! Hash-chained audit events and their canonical byte form.
//!
//! Each event is one line of canonical JSON: object keys sorted
//! lexicographically, UTF-8, no whitespace between tokens. The chain hash is
//! `SHA-256(prev_hash_bytes || canonical(sequence_no, timestamp, actor, action, payload))`.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GENESIS_HASH: [u8; 32] = [0; 32];

const FIELDS: [&str; 7] = [
    "action",
    "actor",
    "payload",
    "prev_hash",
    "sequence_no",
    "this_hash",
    "timestamp",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub sequence_no: u64,
    /// RFC 3339, UTC, microsecond precision, `Z` suffix.
    pub timestamp: String,
    pub actor: String,
    pub action: String,
    pub payload: Value,
    pub prev_hash: String,
    pub this_hash: String,
}

/// Event content before it is placed on the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub actor: String,
    pub action: String,
    pub payload: Value,
}

impl EventDraft {
    pub fn new(actor: impl Into<String>, action: impl Into<String>, payload: Value) -> Self {
        EventDraft {
            actor: actor.into(),
            action: action.into(),
            payload,
        }
    }
}

pub fn format_timestamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Drops sub-microsecond precision so a timestamp survives the audit format.
pub fn truncate_to_micros(at: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_micros(at.timestamp_micros()).expect("in range")
}

/// Serializes with sorted keys and no insignificant whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // serde_json's Value keeps object keys in a BTreeMap, so a round trip sorts them.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

fn hash_input(sequence_no: u64, timestamp: &str, actor: &str, action: &str, payload: &Value) -> Result<String> {
    let mut m = Map::new();
    m.insert("action".into(), Value::from(action));
    m.insert("actor".into(), Value::from(actor));
    m.insert("payload".into(), payload.clone());
    m.insert("sequence_no".into(), Value::from(sequence_no));
    m.insert("timestamp".into(), Value::from(timestamp));
    canonical_json(&Value::Object(m))
}

pub fn chain_hash(prev: &[u8; 32], canonical: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(canonical.as_bytes());
    h.finalize().into()
}

impl AuditEvent {
    pub fn seal(sequence_no: u64, at: DateTime<Utc>, prev: &[u8; 32], draft: EventDraft) -> Result<AuditEvent> {
        let timestamp = format_timestamp(at);
        let canonical = hash_input(sequence_no, &timestamp, &draft.actor, &draft.action, &draft.payload)?;
        let this = chain_hash(prev, &canonical);
        Ok(AuditEvent {
            sequence_no,
            timestamp,
            actor: draft.actor,
            action: draft.action,
            payload: draft.payload,
            prev_hash: hex::encode(prev),
            this_hash: hex::encode(this),
        })
    }

    pub fn to_line(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn at(&self) -> Result<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(&self.timestamp)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| Error::Storage(format!("event {}: bad timestamp: {e}", self.sequence_no)))
    }

    pub fn this_hash_bytes(&self) -> Result<[u8; 32]> {
        decode_hash(&self.this_hash)
    }
}

pub fn decode_hash(s: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).map_err(|e| Error::Storage(format!("bad hash {s:?}: {e}")))?;
    Ok(out)
}

/// Checks one raw line against the expected position and predecessor.
/// Returns the event and its hash when every byte is as the writer left it.
pub fn check_line(line: &[u8], expected_seq: u64, prev: &[u8; 32]) -> Option<(AuditEvent, [u8; 32])> {
    let value: Value = serde_json::from_slice(line).ok()?;
    let obj = value.as_object()?;
    if obj.len() != FIELDS.len() || !FIELDS.iter().all(|k| obj.contains_key(*k)) {
        return None;
    }
    if serde_json::to_vec(&value).ok()? != line {
        return None;
    }
    let event: AuditEvent = serde_json::from_value(value).ok()?;
    if event.sequence_no != expected_seq || event.prev_hash != hex::encode(prev) {
        return None;
    }
    let canonical = hash_input(
        event.sequence_no,
        &event.timestamp,
        &event.actor,
        &event.action,
        &event.payload,
    )
    .ok()?;
    let this = chain_hash(prev, &canonical);
    if event.this_hash != hex::encode(this) {
        return None;
    }
    event.at().ok()?;
    Some((event, this))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// True iff every event present chains correctly.
    pub ok: bool,
    pub first_bad_sequence_no: Option<u64>,
    /// Events that verified before the first bad one (all of them when ok).
    pub events: u64,
    /// Event count recorded in the store index.
    pub expected_events: u64,
    /// The log holds a different number of events than the index records.
    pub count_mismatch: bool,
}

/// Walks a whole log image. Lines are split on `\n`; the file must end with one.
pub fn verify_bytes(bytes: &[u8], expected_events: u64) -> VerifyReport {
    let mut prev = GENESIS_HASH;
    let mut seq = 0u64;
    let mut first_bad = None;
    let mut rest = bytes;
    while !rest.is_empty() {
        let (line, tail, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], &rest[i + 1..], true),
            None => (rest, &rest[rest.len()..], false),
        };
        match check_line(line, seq, &prev) {
            Some((_, h)) if terminated => {
                prev = h;
                seq += 1;
            }
            _ => {
                first_bad = Some(seq);
                break;
            }
        }
        rest = tail;
    }
    let total_lines = if first_bad.is_some() { count_lines(bytes) } else { seq };
    VerifyReport {
        ok: first_bad.is_none(),
        first_bad_sequence_no: first_bad,
        events: seq,
        expected_events,
        count_mismatch: total_lines != expected_events,
    }
}

fn count_lines(bytes: &[u8]) -> u64 {
    let n = bytes.iter().filter(|&&b| b == b'\n').count() as u64;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        n + 1
    } else {
        n
    }
}
