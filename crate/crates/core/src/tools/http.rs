use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use super::{ToolBackend, ToolCall, ToolResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointTemplate {
    /// URL with `{param}` placeholders filled from the call arguments.
    #[serde(default)]
    pub url: String,
    /// Query parameters; a parameter whose template names a missing
    /// argument is omitted.
    #[serde(default)]
    pub query: BTreeMap<String, String>,
    /// The tool has no live implementation in this build.
    #[serde(default)]
    pub unsupported: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HostLimit {
    pub min_interval_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointCatalog {
    #[serde(default)]
    pub tools: BTreeMap<String, EndpointTemplate>,
    #[serde(default)]
    pub hosts: BTreeMap<String, HostLimit>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl EndpointCatalog {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| e.to_string())?;
        Self::from_json(&text)
    }
}

fn placeholder() -> Regex {
    Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("placeholder pattern")
}

fn arg_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Fills `{name}` placeholders; `None` when an argument is missing.
fn fill(template: &str, args: &Value, re: &Regex, encode: bool) -> Result<String, String> {
    let mut missing = None;
    let out = re.replace_all(template, |c: &regex::Captures| match args.get(&c[1]) {
        Some(v) => {
            let s = arg_text(v);
            if encode {
                url::form_urlencoded::byte_serialize(s.as_bytes()).collect::<String>()
            } else {
                s
            }
        }
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(m) => Err(m),
        None => Ok(out.into_owned()),
    }
}

/// Thin HTTP client for live federal endpoints.
pub struct HttpToolBackend {
    catalog: EndpointCatalog,
    client: reqwest::Client,
    last_request: Mutex<HashMap<String, Instant>>,
    placeholder: Regex,
}

impl HttpToolBackend {
    pub fn new(catalog: EndpointCatalog) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(catalog.timeout_secs))
            .user_agent("stormleg/0.1")
            .build()
            .expect("http client");
        Self {
            catalog,
            client,
            last_request: Mutex::new(HashMap::new()),
            placeholder: placeholder(),
        }
    }

    /// Resolves the request URL for a call.
    pub fn resolve(&self, call: &ToolCall) -> Result<url::Url, ToolResult> {
        let tpl = self.catalog.tools.get(&call.tool_name).ok_or_else(|| {
            ToolResult::error("no_endpoint", format!("no endpoint configured for {}", call.tool_name), json!({"tool": call.tool_name}))
        })?;
        if tpl.unsupported {
            return Err(ToolResult::error(
                "unsupported",
                format!("{} is unsupported in this build", call.tool_name),
                json!({"tool": call.tool_name}),
            ));
        }
        let base = fill(&tpl.url, &call.arguments, &self.placeholder, true).map_err(|m| {
            ToolResult::error("missing_argument", format!("argument {m} is required"), json!({"tool": call.tool_name}))
        })?;
        let mut url = url::Url::parse(&base)
            .map_err(|e| ToolResult::error("bad_endpoint", e.to_string(), json!({"url": base})))?;
        {
            let mut pairs = url.query_pairs_mut();
            for (k, v) in &tpl.query {
                if let Ok(value) = fill(v, &call.arguments, &self.placeholder, false) {
                    pairs.append_pair(k, &value);
                }
            }
        }
        if url.query() == Some("") {
            url.set_query(None);
        }
        Ok(url)
    }

    async fn pace(&self, host: &str) {
        let Some(limit) = self.catalog.hosts.get(host) else { return };
        let interval = Duration::from_millis(limit.min_interval_ms);
        // Holding the lock across the sleep serializes requests to the host.
        let mut last = self.last_request.lock().await;
        if let Some(prev) = last.get(host) {
            let since = prev.elapsed();
            if since < interval {
                tokio::time::sleep(interval - since).await;
            }
        }
        last.insert(host.to_string(), Instant::now());
    }
}

#[async_trait]
impl ToolBackend for HttpToolBackend {
    async fn call(&self, call: &ToolCall) -> ToolResult {
        let url = match self.resolve(call) {
            Ok(u) => u,
            Err(e) => return e,
        };
        self.pace(url.host_str().unwrap_or_default()).await;
        let resp = match self.client.get(url.clone()).send().await {
            Ok(r) => r,
            Err(e) => {
                return ToolResult::error("transport", e.to_string(), json!({"url": url.as_str()}));
            }
        };
        let status = resp.status().as_u16();
        let body = match resp.text().await {
            Ok(b) => b,
            Err(e) => return ToolResult::error("transport", e.to_string(), json!({"url": url.as_str()})),
        };
        if status >= 400 {
            let excerpt: String = body.chars().take(512).collect();
            return ToolResult::error(
                "http_status",
                format!("HTTP {status}"),
                json!({"status": status, "url": url.as_str(), "body_excerpt": excerpt}),
            );
        }
        let mut result = ToolResult::ok(body);
        result.urls = vec![url.to_string()];
        result.urls.extend(super::harvest_urls(&result.body).into_iter().filter(|u| u != url.as_str()));
        result
    }
}
