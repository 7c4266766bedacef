//! Append-only provenance ledger.
//!
//! Every run opens a trace; node annotations and tool-call records are
//! appended under it with a per-trace sequence number. A persistent ledger
//! writes one JSONL file per trace plus an `index.jsonl` file. LLM
//! transcripts are kept next to the ledger (in the run result), not in it.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::Stage;
use crate::tools::ToolOutcome;

pub const DEFAULT_PREVIEW_BOUND: usize = 2048;
const EXPORT_FORMAT: &str = "stormleg-trace";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceId(pub String);

impl TraceId {
    pub fn fresh() -> Self {
        TraceId(uuid::Uuid::new_v4().to_string())
    }
}

impl std::fmt::Display for TraceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First `bound` characters of `text`.
pub fn bounded_preview(text: &str, bound: usize) -> String {
    text.chars().take(bound).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOpen {
    pub trace_id: TraceId,
    pub seq: u64,
    pub query_text: String,
    pub opened_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub trace_id: TraceId,
    #[serde(default)]
    pub seq: u64,
    pub node_id: String,
    pub agent_id: String,
    pub tool_name: String,
    pub ordinal: usize,
    pub arguments_digest: String,
    pub arguments_preview: String,
    pub started_at: DateTime<Utc>,
    pub duration_ms: u64,
    pub result_content_hash: String,
    pub result_preview: String,
    pub harvested_urls: Vec<String>,
    pub outcome: ToolOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAnnotation {
    pub trace_id: TraceId,
    #[serde(default)]
    pub seq: u64,
    pub node_id: String,
    pub agent_id: String,
    pub stage: Stage,
    pub inputs_digest: String,
    pub output_digest: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerRecord {
    TraceOpen(TraceOpen),
    ToolCall(ToolCallRecord),
    Node(NodeAnnotation),
}

impl LedgerRecord {
    pub fn seq(&self) -> u64 {
        match self {
            LedgerRecord::TraceOpen(r) => r.seq,
            LedgerRecord::ToolCall(r) => r.seq,
            LedgerRecord::Node(r) => r.seq,
        }
    }

    /// The record with timestamps, durations and the trace id blanked, for
    /// comparing runs.
    pub fn normalized(&self) -> LedgerRecord {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let blank = TraceId(String::new());
        match self.clone() {
            LedgerRecord::TraceOpen(mut r) => {
                r.trace_id = blank;
                r.opened_at = epoch;
                LedgerRecord::TraceOpen(r)
            }
            LedgerRecord::ToolCall(mut r) => {
                r.trace_id = blank;
                r.started_at = epoch;
                r.duration_ms = 0;
                r.seq = 0;
                LedgerRecord::ToolCall(r)
            }
            LedgerRecord::Node(mut r) => {
                r.trace_id = blank;
                r.started_at = epoch;
                r.finished_at = epoch;
                r.duration_ms = 0;
                r.seq = 0;
                LedgerRecord::Node(r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error("unknown trace: {0}")]
    UnknownTrace(TraceId),
    #[error("node {node} of trace {trace} is already annotated")]
    DuplicateAnnotation { trace: TraceId, node: String },
    #[error("trace {0} already exists")]
    DuplicateTrace(TraceId),
    #[error("malformed export: {0}")]
    Malformed(String),
    #[error("ledger io: {0}")]
    Io(String),
}

/// Conjunctive filter over tool-call records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerFilter {
    #[serde(default)]
    pub node: Option<String>,
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub outcome: Option<ToolOutcome>,
    #[serde(default)]
    pub since: Option<DateTime<Utc>>,
    #[serde(default)]
    pub until: Option<DateTime<Utc>>,
}

impl LedgerFilter {
    pub fn accepts(&self, r: &ToolCallRecord) -> bool {
        self.node.as_ref().is_none_or(|n| &r.node_id == n)
            && self.tool.as_ref().is_none_or(|t| &r.tool_name == t)
            && self.outcome.is_none_or(|o| r.outcome == o)
            && self.since.is_none_or(|s| r.started_at >= s)
            && self.until.is_none_or(|u| r.started_at <= u)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportHeader {
    format: String,
    version: u32,
    trace_id: TraceId,
    records: usize,
}

#[derive(Default)]
struct State {
    traces: HashMap<TraceId, Vec<LedgerRecord>>,
    annotated: HashSet<(TraceId, String)>,
}

pub struct Ledger {
    state: Mutex<State>,
    dir: Option<PathBuf>,
    preview_bound: usize,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self {
            state: Mutex::new(State::default()),
            dir: None,
            preview_bound: DEFAULT_PREVIEW_BOUND,
        }
    }

    /// A ledger that also appends to JSONL files under `dir`. Existing
    /// traces in `dir` are loaded.
    pub fn persistent(dir: impl AsRef<Path>) -> Result<Self, ProvenanceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ProvenanceError::Io(e.to_string()))?;
        let mut state = State::default();
        for entry in fs::read_dir(&dir).map_err(|e| ProvenanceError::Io(e.to_string()))? {
            let path = entry.map_err(|e| ProvenanceError::Io(e.to_string()))?.path();
            let is_trace = path.extension().is_some_and(|e| e == "jsonl")
                && path.file_stem().is_some_and(|s| s != "index");
            if !is_trace {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| ProvenanceError::Io(e.to_string()))?;
            let records = parse_lines(&text)?;
            if let Some(LedgerRecord::TraceOpen(open)) = records.first() {
                let id = open.trace_id.clone();
                for r in &records {
                    if let LedgerRecord::Node(n) = r {
                        state.annotated.insert((id.clone(), n.node_id.clone()));
                    }
                }
                state.traces.insert(id, records);
            }
        }
        Ok(Self {
            state: Mutex::new(state),
            dir: Some(dir),
            preview_bound: DEFAULT_PREVIEW_BOUND,
        })
    }

    pub fn with_preview_bound(mut self, bound: usize) -> Self {
        self.preview_bound = bound;
        self
    }

    pub fn preview_bound(&self) -> usize {
        self.preview_bound
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn persist(&self, record: &LedgerRecord, trace: &TraceId) -> Result<(), ProvenanceError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let line = serde_json::to_string(record).map_err(|e| ProvenanceError::Io(e.to_string()))?;
        append_line(&dir.join(format!("{trace}.jsonl")), &line)?;
        if let LedgerRecord::TraceOpen(open) = record {
            let idx = serde_json::json!({
                "trace_id": open.trace_id,
                "query_text": open.query_text,
                "opened_at": open.opened_at,
            });
            append_line(&dir.join("index.jsonl"), &idx.to_string())?;
        }
        Ok(())
    }

    fn append(&self, trace: &TraceId, build: impl FnOnce(u64) -> LedgerRecord) -> Result<u64, ProvenanceError> {
        let mut state = self.state.lock().expect("ledger state");
        let records = state
            .traces
            .get_mut(trace)
            .ok_or_else(|| ProvenanceError::UnknownTrace(trace.clone()))?;
        let seq = records.len() as u64;
        let record = build(seq);
        self.persist(&record, trace)?;
        records.push(record);
        Ok(seq)
    }

    pub fn open_trace(&self, query_text: &str) -> TraceId {
        let id = TraceId::fresh();
        let record = LedgerRecord::TraceOpen(TraceOpen {
            trace_id: id.clone(),
            seq: 0,
            query_text: query_text.to_string(),
            opened_at: Utc::now(),
        });
        let mut state = self.state.lock().expect("ledger state");
        if let Err(e) = self.persist(&record, &id) {
            tracing::warn!(error = %e, "could not persist trace header");
        }
        state.traces.insert(id.clone(), vec![record]);
        id
    }

    pub fn record_tool_call(&self, mut record: ToolCallRecord) -> Result<u64, ProvenanceError> {
        record.arguments_preview = bounded_preview(&record.arguments_preview, self.preview_bound);
        record.result_preview = bounded_preview(&record.result_preview, self.preview_bound);
        let trace = record.trace_id.clone();
        self.append(&trace, |seq| {
            record.seq = seq;
            LedgerRecord::ToolCall(record)
        })
    }

    pub fn annotate_node(&self, mut annotation: NodeAnnotation) -> Result<u64, ProvenanceError> {
        let trace = annotation.trace_id.clone();
        {
            let mut state = self.state.lock().expect("ledger state");
            if !state.traces.contains_key(&trace) {
                return Err(ProvenanceError::UnknownTrace(trace));
            }
            if !state.annotated.insert((trace.clone(), annotation.node_id.clone())) {
                return Err(ProvenanceError::DuplicateAnnotation {
                    trace,
                    node: annotation.node_id,
                });
            }
        }
        self.append(&trace, |seq| {
            annotation.seq = seq;
            LedgerRecord::Node(annotation)
        })
    }

    pub fn records(&self, trace: &TraceId) -> Result<Vec<LedgerRecord>, ProvenanceError> {
        let state = self.state.lock().expect("ledger state");
        state
            .traces
            .get(trace)
            .cloned()
            .ok_or_else(|| ProvenanceError::UnknownTrace(trace.clone()))
    }

    pub fn query_text(&self, trace: &TraceId) -> Result<String, ProvenanceError> {
        match self.records(trace)?.into_iter().next() {
            Some(LedgerRecord::TraceOpen(o)) => Ok(o.query_text),
            _ => Err(ProvenanceError::Malformed("trace has no header".into())),
        }
    }

    pub fn query(&self, trace: &TraceId, filter: &LedgerFilter) -> Result<Vec<ToolCallRecord>, ProvenanceError> {
        Ok(self
            .records(trace)?
            .into_iter()
            .filter_map(|r| match r {
                LedgerRecord::ToolCall(t) if filter.accepts(&t) => Some(t),
                _ => None,
            })
            .collect())
    }

    pub fn nodes(&self, trace: &TraceId) -> Result<Vec<NodeAnnotation>, ProvenanceError> {
        Ok(self
            .records(trace)?
            .into_iter()
            .filter_map(|r| match r {
                LedgerRecord::Node(n) => Some(n),
                _ => None,
            })
            .collect())
    }

    pub fn trace_ids(&self) -> Vec<TraceId> {
        let state = self.state.lock().expect("ledger state");
        let mut ids: Vec<TraceId> = state.traces.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Portable document: one header line, then one line per record.
    pub fn export_trace(&self, trace: &TraceId) -> Result<String, ProvenanceError> {
        let records = self.records(trace)?;
        let header = ExportHeader {
            format: EXPORT_FORMAT.into(),
            version: 1,
            trace_id: trace.clone(),
            records: records.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn import_trace(&self, document: &str) -> Result<TraceId, ProvenanceError> {
        let mut lines = document.lines().filter(|l| !l.trim().is_empty());
        let header: ExportHeader = serde_json::from_str(lines.next().ok_or_else(|| ProvenanceError::Malformed("empty document".into()))?)
            .map_err(|e| ProvenanceError::Malformed(e.to_string()))?;
        if header.format != EXPORT_FORMAT {
            return Err(ProvenanceError::Malformed(format!("unknown format {}", header.format)));
        }
        let records = parse_lines(&lines.collect::<Vec<_>>().join("\n"))?;
        if records.len() != header.records {
            return Err(ProvenanceError::Malformed(format!(
                "header announces {} records, found {}",
                header.records,
                records.len()
            )));
        }
        let mut state = self.state.lock().expect("ledger state");
        if state.traces.contains_key(&header.trace_id) {
            return Err(ProvenanceError::DuplicateTrace(header.trace_id));
        }
        for r in &records {
            if let LedgerRecord::Node(n) = r {
                state.annotated.insert((header.trace_id.clone(), n.node_id.clone()));
            }
            self.persist(r, &header.trace_id)?;
        }
        state.traces.insert(header.trace_id.clone(), records);
        Ok(header.trace_id)
    }
}

fn parse_lines(text: &str) -> Result<Vec<LedgerRecord>, ProvenanceError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ProvenanceError::Malformed(e.to_string())))
        .collect()
}

fn append_line(path: &Path, line: &str) -> Result<(), ProvenanceError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ProvenanceError::Io(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| ProvenanceError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trace: &TraceId, node: &str, tool: &str, outcome: ToolOutcome, body: &str) -> ToolCallRecord {
        ToolCallRecord {
            trace_id: trace.clone(),
            seq: 0,
            node_id: node.into(),
            agent_id: "a".into(),
            tool_name: tool.into(),
            ordinal: 0,
            arguments_digest: sha256_hex(b"{}"),
            arguments_preview: "{}".into(),
            started_at: Utc::now(),
            duration_ms: 1,
            result_content_hash: sha256_hex(body.as_bytes()),
            result_preview: body.into(),
            harvested_urls: vec![],
            outcome,
        }
    }

    fn annotation(trace: &TraceId, node: &str) -> NodeAnnotation {
        NodeAnnotation {
            trace_id: trace.clone(),
            seq: 0,
            node_id: node.into(),
            agent_id: "a".into(),
            stage: Stage::Specialist,
            inputs_digest: sha256_hex(b"in"),
            output_digest: sha256_hex(b"out"),
            started_at: Utc::now(),
            finished_at: Utc::now(),
            duration_ms: 0,
            error: None,
        }
    }

    #[test]
    fn traces_are_distinct_and_keep_query() {
        let l = Ledger::in_memory();
        let a = l.open_trace("q1");
        let b = l.open_trace("q2");
        assert_ne!(a, b);
        assert_eq!(l.query_text(&b).unwrap(), "q2");
    }

    #[test]
    fn long_preview_is_truncated_hash_kept() {
        let l = Ledger::in_memory();
        let t = l.open_trace("q");
        let body = "x".repeat(10 * 1024);
        l.record_tool_call(record(&t, "n", "tool", ToolOutcome::Ok, &body)).unwrap();
        let r = &l.query(&t, &LedgerFilter::default()).unwrap()[0];
        assert_eq!(r.result_preview.chars().count(), DEFAULT_PREVIEW_BOUND);
        assert_eq!(r.result_content_hash, sha256_hex(body.as_bytes()));
    }

    #[test]
    fn duplicate_annotation_and_unknown_trace_fail() {
        let l = Ledger::in_memory();
        let t = l.open_trace("q");
        l.annotate_node(annotation(&t, "n")).unwrap();
        assert!(matches!(l.annotate_node(annotation(&t, "n")), Err(ProvenanceError::DuplicateAnnotation { .. })));
        let ghost = TraceId("nope".into());
        assert_eq!(
            l.record_tool_call(record(&ghost, "n", "t", ToolOutcome::Ok, "")).unwrap_err(),
            ProvenanceError::UnknownTrace(ghost.clone())
        );
        assert!(l.query(&ghost, &LedgerFilter::default()).is_err());
    }

    #[test]
    fn filters_are_conjunctive() {
        let l = Ledger::in_memory();
        let t = l.open_trace("q");
        l.record_tool_call(record(&t, "n1", "a", ToolOutcome::Ok, "1")).unwrap();
        l.record_tool_call(record(&t, "n1", "b", ToolOutcome::Error, "2")).unwrap();
        l.record_tool_call(record(&t, "n2", "b", ToolOutcome::Error, "3")).unwrap();
        let f = LedgerFilter { node: Some("n1".into()), outcome: Some(ToolOutcome::Error), ..Default::default() };
        let hits = l.query(&t, &f).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].tool_name, "b");
        assert_eq!(hits[0].seq, 2);
    }

    #[test]
    fn export_import_export_is_byte_identical() {
        let l = Ledger::in_memory();
        let t = l.open_trace("q");
        l.record_tool_call(record(&t, "n", "a", ToolOutcome::Ok, "body")).unwrap();
        l.annotate_node(annotation(&t, "n")).unwrap();
        let doc = l.export_trace(&t).unwrap();

        let other = Ledger::in_memory();
        let id = other.import_trace(&doc).unwrap();
        assert_eq!(id, t);
        assert_eq!(other.export_trace(&id).unwrap(), doc);
        assert!(matches!(other.import_trace(&doc), Err(ProvenanceError::DuplicateTrace(_))));
    }

    #[test]
    fn persistent_ledger_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let t = {
            let l = Ledger::persistent(dir.path()).unwrap();
            let t = l.open_trace("persist me");
            l.record_tool_call(record(&t, "n", "a", ToolOutcome::Ok, "b")).unwrap();
            t
        };
        let l = Ledger::persistent(dir.path()).unwrap();
        assert_eq!(l.query_text(&t).unwrap(), "persist me");
        assert_eq!(l.query(&t, &LedgerFilter::default()).unwrap().len(), 1);
        let index = fs::read_to_string(dir.path().join("index.jsonl")).unwrap();
        assert!(index.contains(&t.0));
    }
}
