//! File formats: models, ground-truth traces and observed event logs.
//!
//! The observed log keeps only what a recording system would have seen:
//! activity names, recorded objects and (possibly coarsened) timestamps.
//! The ground truth lives in a separate trace file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Net, SCHEMA_VERSION};
use crate::sim::{GroundTruthTrace, TraceMetadata, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: String, found: String },
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e.to_string())
    }
}

fn parse_err(line: usize, e: &serde_json::Error) -> IoError {
    IoError::Parse { line, column: e.column(), message: e.to_string() }
}

fn check_version(found: &str) -> Result<(), IoError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(IoError::SchemaVersionMismatch { expected: SCHEMA_VERSION.to_string(), found: found.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservedEvent {
    pub event_id: String,
    pub timestamp: String,
    pub activity: String,
    pub objects: Vec<String>,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedLog {
    pub run_id: String,
    /// Every recorded object with its type.
    pub objects: BTreeMap<String, String>,
    pub events: Vec<ObservedEvent>,
}

pub fn event_id(run_id: &str, seq_no: u64) -> String {
    format!("{run_id}-{seq_no:08}")
}

/// Renders `seconds` after `epoch` as RFC 3339 UTC with millisecond precision.
pub fn render_timestamp(epoch: &str, seconds: f64) -> String {
    let base = DateTime::parse_from_rfc3339(epoch).map(|d| d.with_timezone(&Utc)).unwrap_or(DateTime::UNIX_EPOCH);
    let t = base + Duration::milliseconds((seconds * 1000.0).round() as i64);
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// The observed log of a trace: one event per labeled firing, carrying only
/// the recorded objects.
pub fn project_observed(trace: &GroundTruthTrace, run_id: &str) -> ObservedLog {
    let epoch = &trace.metadata.timestamp_epoch;
    let mut objects = BTreeMap::new();
    let mut events: Vec<ObservedEvent> = trace
        .records
        .iter()
        .filter_map(|r| {
            let activity = r.activity_label.clone()?;
            for o in &r.recorded_objects {
                objects.insert(o.id.clone(), o.object_type.clone());
            }
            Some(ObservedEvent {
                event_id: event_id(run_id, r.seq_no),
                timestamp: render_timestamp(epoch, r.recorded_time),
                activity,
                objects: r.recorded_objects.iter().map(|o| o.id.clone()).collect(),
                run_id: run_id.to_string(),
            })
        })
        .collect();
    events.sort_by(|a, b| (&a.timestamp, &a.event_id).cmp(&(&b.timestamp, &b.event_id)));
    ObservedLog { run_id: run_id.to_string(), objects, events }
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    schema_version: String,
    run_id: String,
    objects: BTreeMap<String, String>,
}

pub fn write_log_jsonl(log: &ObservedLog) -> String {
    let header =
        LogHeader { schema_version: SCHEMA_VERSION.to_string(), run_id: log.run_id.clone(), objects: log.objects.clone() };
    let mut out = serde_json::to_string(&header).expect("serializable");
    out.push('\n');
    for e in &log.events {
        out.push_str(&serde_json::to_string(e).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn read_log_jsonl(text: &str) -> Result<ObservedLog, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(IoError::Parse { line: 1, column: 0, message: "missing header line".into() });
    };
    let header: LogHeader = serde_json::from_str(first).map_err(|e| parse_err(1, &e))?;
    check_version(&header.schema_version)?;
    let events = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, &e)))
        .collect::<Result<Vec<ObservedEvent>, _>>()?;
    Ok(ObservedLog { run_id: header.run_id, objects: header.objects, events })
}

const CSV_HEADER: [&str; 6] = ["schema_version", "event_id", "timestamp", "activity", "objects", "run_id"];

pub fn write_log_csv(log: &ObservedLog) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for e in &log.events {
        let objects = e.objects.join(";");
        w.write_record([SCHEMA_VERSION, &e.event_id, &e.timestamp, &e.activity, &objects, &e.run_id])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Reads the events of a CSV log. The CSV format carries no object types.
pub fn read_log_csv(text: &str) -> Result<Vec<ObservedEvent>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| IoError::Parse { line: 1, column: 0, message: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(IoError::Parse { line: 1, column: 0, message: format!("unexpected header {header:?}") });
    }
    let mut events = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Parse { line: i + 2, column: 0, message: e.to_string() })?;
        check_version(&rec[0])?;
        let objects = if rec[4].is_empty() { Vec::new() } else { rec[4].split(';').map(str::to_string).collect() };
        events.push(ObservedEvent {
            event_id: rec[1].to_string(),
            timestamp: rec[2].to_string(),
            activity: rec[3].to_string(),
            objects,
            run_id: rec[5].to_string(),
        });
    }
    Ok(events)
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    schema_version: String,
    metadata: TraceMetadata,
}

pub fn write_trace(trace: &GroundTruthTrace) -> String {
    let header = TraceHeader { schema_version: SCHEMA_VERSION.to_string(), metadata: trace.metadata.clone() };
    let mut out = serde_json::to_string(&header).expect("serializable");
    out.push('\n');
    for r in &trace.records {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Reads a trace file. With `net`, every record must name one of its
/// transitions.
pub fn read_trace(text: &str, net: Option<&Net>) -> Result<GroundTruthTrace, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(IoError::Parse { line: 1, column: 0, message: "missing header line".into() });
    };
    let header: TraceHeader = serde_json::from_str(first).map_err(|e| parse_err(1, &e))?;
    check_version(&header.schema_version)?;
    let mut records = Vec::new();
    for (i, l) in lines {
        let r: TraceRecord = serde_json::from_str(l).map_err(|e| parse_err(i + 1, &e))?;
        if let Some(net) = net {
            if net.transition(&r.transition).is_none() {
                return Err(IoError::Parse {
                    line: i + 1,
                    column: 0,
                    message: format!("unknown transition {}", r.transition),
                });
            }
        }
        records.push(r);
    }
    Ok(GroundTruthTrace { metadata: header.metadata, records })
}

pub fn write_net(net: &Net) -> String {
    let mut s = serde_json::to_string_pretty(net).expect("serializable");
    s.push('\n');
    s
}

pub fn read_net(text: &str) -> Result<Net, IoError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if let Some(v) = value.get("schema_version").and_then(|v| v.as_str()) {
        check_version(v)?;
    }
    serde_json::from_value(value).map_err(|e| IoError::Parse { line: 0, column: 0, message: e.to_string() })
}

/// Parses a JSON document, reporting the position of syntax errors.
pub fn read_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| IoError::Io(e.to_string()))?;
    Ok(())
}
