//! Tool dispatch: fault injection, backend execution, URL harvesting and
//! ledger capture.

mod fixture;
mod http;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use async_trait::async_trait;
use chrono::Utc;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::llm::ImageAttachment;
use crate::provenance::{sha256_hex, Ledger, ProvenanceError, ToolCallRecord, TraceId};

pub use fixture::{FixtureBackend, FixtureEntry, FixtureError, FixtureIndex, FixtureResult};
pub use http::{EndpointCatalog, EndpointTemplate, HttpToolBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub node_id: String,
    pub agent_id: String,
    pub tool_name: String,
    pub arguments: Value,
    /// Per-node call index.
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolOutcome {
    Ok,
    Error,
    /// Rejected by the allowlist before dispatch.
    Denied,
}

impl std::str::FromStr for ToolOutcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ok" => Ok(ToolOutcome::Ok),
            "error" => Ok(ToolOutcome::Error),
            "denied" => Ok(ToolOutcome::Denied),
            other => Err(format!("unknown outcome {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub outcome: ToolOutcome,
    /// Text body, or a JSON reference document for image payloads. Always a
    /// structured JSON error document when the outcome is not ok.
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageAttachment>,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default)]
    pub elapsed_ms: u64,
}

impl ToolResult {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            outcome: ToolOutcome::Ok,
            body: body.into(),
            image: None,
            urls: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn error(kind: &str, message: impl Into<String>, detail: Value) -> Self {
        let body = json!({"error": {"type": kind, "message": message.into(), "detail": detail}});
        Self {
            outcome: ToolOutcome::Error,
            body: body.to_string(),
            image: None,
            urls: Vec::new(),
            elapsed_ms: 0,
        }
    }

    /// Raw bytes the content hash is computed over.
    pub fn content_bytes(&self) -> Vec<u8> {
        use base64::Engine;
        match &self.image {
            Some(img) => base64::engine::general_purpose::STANDARD
                .decode(&img.data_base64)
                .unwrap_or_else(|_| img.data_base64.clone().into_bytes()),
            None => self.body.clone().into_bytes(),
        }
    }
}

/// Forces every tool call of one specialist to fail with a structured error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub failed_specialist: String,
    #[serde(default = "default_template")]
    pub error_template: String,
}

fn default_template() -> String {
    "simulated outage: {agent} service unavailable".to_string()
}

impl FaultPlan {
    pub fn outage(agent: impl Into<String>) -> Self {
        Self {
            failed_specialist: agent.into(),
            error_template: default_template(),
        }
    }

    pub fn applies_to(&self, agent_id: &str) -> bool {
        self.failed_specialist == agent_id
    }

    pub fn result_for(&self, call: &ToolCall) -> ToolResult {
        let message = crate::prompts::render(
            &self.error_template,
            &[("agent", &call.agent_id), ("tool", &call.tool_name)],
        );
        ToolResult::error(
            "service_unavailable",
            message,
            json!({"agent": call.agent_id, "tool": call.tool_name}),
        )
    }
}

#[async_trait]
pub trait ToolBackend: Send + Sync {
    /// Executes a permitted call. Failures are returned as error results.
    async fn call(&self, call: &ToolCall) -> ToolResult;
}

/// Canonical JSON: object keys sorted lexicographically, no insignificant
/// whitespace.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn arguments_digest(v: &Value) -> String {
    sha256_hex(canonical_json(v).as_bytes())
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://[A-Za-z0-9\-._~:/?#\[\]@!$&'()*+,;=%]+").expect("url pattern"))
}

/// URL-shaped substrings of `text`, in order of appearance, without duplicates.
pub fn harvest_urls(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in url_pattern().find_iter(text) {
        let url = m.as_str().trim_end_matches(['.', ',', ';', ':', ')', ']', '\'', '!', '?']);
        if !out.iter().any(|u| u == url) {
            out.push(url.to_string());
        }
    }
    out
}

/// Binds a backend, an optional fault plan and the ledger for one trace.
pub struct Dispatcher {
    backend: Arc<dyn ToolBackend>,
    fault: Option<FaultPlan>,
    ledger: Arc<Ledger>,
    trace: TraceId,
    count: AtomicUsize,
}

impl Dispatcher {
    pub fn new(backend: Arc<dyn ToolBackend>, fault: Option<FaultPlan>, ledger: Arc<Ledger>, trace: TraceId) -> Self {
        Self {
            backend,
            fault,
            ledger,
            trace,
            count: AtomicUsize::new(0),
        }
    }

    pub fn trace(&self) -> &TraceId {
        &self.trace
    }

    /// Calls processed so far, denials included.
    pub fn dispatched(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub async fn dispatch(&self, call: &ToolCall) -> Result<ToolResult, ProvenanceError> {
        let started_at = Utc::now();
        let clock = Instant::now();
        let mut result = match &self.fault {
            Some(f) if f.applies_to(&call.agent_id) => f.result_for(call),
            _ => self.backend.call(call).await,
        };
        result.elapsed_ms = clock.elapsed().as_millis() as u64;
        if result.urls.is_empty() {
            result.urls = harvest_urls(&result.body);
        }
        self.record(call, &result, started_at)?;
        Ok(result)
    }

    /// Records an allowlist denial and returns the error handed to the model.
    pub fn deny(&self, call: &ToolCall) -> Result<ToolResult, ProvenanceError> {
        let mut result = ToolResult::error(
            "tool_not_permitted",
            format!("tool {} is not in the allowlist of {}", call.tool_name, call.agent_id),
            json!({"agent": call.agent_id, "tool": call.tool_name}),
        );
        result.outcome = ToolOutcome::Denied;
        self.record(call, &result, Utc::now())?;
        Ok(result)
    }

    fn record(&self, call: &ToolCall, result: &ToolResult, started_at: chrono::DateTime<Utc>) -> Result<(), ProvenanceError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.ledger.record_tool_call(ToolCallRecord {
            trace_id: self.trace.clone(),
            seq: 0,
            node_id: call.node_id.clone(),
            agent_id: call.agent_id.clone(),
            tool_name: call.tool_name.clone(),
            ordinal: call.ordinal,
            arguments_digest: arguments_digest(&call.arguments),
            arguments_preview: canonical_json(&call.arguments),
            started_at,
            duration_ms: result.elapsed_ms,
            result_content_hash: sha256_hex(&result.content_bytes()),
            result_preview: result.body.clone(),
            harvested_urls: result.urls.clone(),
            outcome: result.outcome,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::LedgerFilter;

    struct Echo;

    #[async_trait]
    impl ToolBackend for Echo {
        async fn call(&self, call: &ToolCall) -> ToolResult {
            ToolResult::ok(format!("echo {} see https://example.gov/a?b=1.", call.tool_name))
        }
    }

    fn call(agent: &str) -> ToolCall {
        ToolCall {
            node_id: format!("t0.l0.{agent}"),
            agent_id: agent.into(),
            tool_name: "t".into(),
            arguments: json!({"b": 1, "a": [1, {"d": 2, "c": 3}]}),
            ordinal: 0,
        }
    }

    #[test]
    fn canonical_form_sorts_keys() {
        assert_eq!(canonical_json(&call("x").arguments), r#"{"a":[1,{"c":3,"d":2}],"b":1}"#);
        let reordered: Value = serde_json::from_str(r#"{ "a": [1, {"c": 3, "d": 2}], "b": 1 }"#).unwrap();
        assert_eq!(arguments_digest(&reordered), arguments_digest(&call("x").arguments));
    }

    #[test]
    fn harvests_urls_without_trailing_punctuation() {
        let urls = harvest_urls("see https://tidesandcurrents.noaa.gov/stationhome.html?id=8771450. and (http://x.gov/y), https://tidesandcurrents.noaa.gov/stationhome.html?id=8771450");
        assert_eq!(urls, vec!["https://tidesandcurrents.noaa.gov/stationhome.html?id=8771450", "http://x.gov/y"]);
        assert!(harvest_urls("").is_empty());
    }

    #[tokio::test]
    async fn fault_short_circuits_only_named_agent() {
        let ledger = Arc::new(Ledger::in_memory());
        let trace = ledger.open_trace("q");
        let d = Dispatcher::new(Arc::new(Echo), Some(FaultPlan::outage("usgs")), ledger.clone(), trace.clone());
        let bad = d.dispatch(&call("usgs")).await.unwrap();
        assert_eq!(bad.outcome, ToolOutcome::Error);
        let doc: Value = serde_json::from_str(&bad.body).unwrap();
        assert_eq!(doc["error"]["message"], "simulated outage: usgs service unavailable");
        let good = d.dispatch(&call("nhc")).await.unwrap();
        assert_eq!(good.urls, vec!["https://example.gov/a?b=1"]);
        d.deny(&call("nhc")).unwrap();
        assert_eq!(d.dispatched(), 3);
        let errors = ledger
            .query(&trace, &LedgerFilter { outcome: Some(ToolOutcome::Error), ..Default::default() })
            .unwrap();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].agent_id, "usgs");
    }
}
