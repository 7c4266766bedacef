use std::collections::HashMap;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{arguments_digest, ToolBackend, ToolCall, ToolOutcome, ToolResult};
use crate::llm::ImageAttachment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResult {
    #[serde(default = "ok_outcome")]
    pub outcome: ToolOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    /// Image file relative to the fixture directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urls: Option<Vec<String>>,
}

fn ok_outcome() -> ToolOutcome {
    ToolOutcome::Ok
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub tool: String,
    #[serde(default)]
    pub args: Value,
    pub result: FixtureResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureIndex {
    pub entries: Vec<FixtureEntry>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture index {path}: {message}")]
    Load { path: String, message: String },
    #[error("duplicate fixture for {tool} with arguments digest {digest}")]
    Duplicate { tool: String, digest: String },
    #[error("fixture for {tool}: {message}")]
    BadEntry { tool: String, message: String },
}

/// Exact-match replay keyed by (tool, canonical-arguments digest).
pub struct FixtureBackend {
    table: HashMap<(String, String), ToolResult>,
}

fn media_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

impl FixtureBackend {
    /// Loads `index.json` from a fixture directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let dir = dir.as_ref();
        let path = dir.join("index.json");
        let text = std::fs::read_to_string(&path).map_err(|e| FixtureError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let index: FixtureIndex = serde_json::from_str(&text).map_err(|e| FixtureError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_index(index, dir)
    }

    pub fn from_index(index: FixtureIndex, base: &Path) -> Result<Self, FixtureError> {
        let mut table = HashMap::new();
        for entry in index.entries {
            let digest = arguments_digest(&entry.args);
            let key = (entry.tool.clone(), digest.clone());
            if table.contains_key(&key) {
                return Err(FixtureError::Duplicate { tool: entry.tool, digest });
            }
            let result = build_result(&entry, base)?;
            table.insert(key, result);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

fn build_result(entry: &FixtureEntry, base: &Path) -> Result<ToolResult, FixtureError> {
    let r = &entry.result;
    let mut result = match (&r.image_file, &r.body) {
        (Some(file), _) => {
            let path: PathBuf = base.join(file);
            let bytes = std::fs::read(&path).map_err(|e| FixtureError::BadEntry {
                tool: entry.tool.clone(),
                message: format!("{}: {e}", path.display()),
            })?;
            let media = media_type(&path);
            let mut reference = json!({"image": file, "media_type": media, "bytes": bytes.len()});
            if let Some(Value::Object(extra)) = &r.body {
                for (k, v) in extra {
                    reference[k] = v.clone();
                }
            }
            let mut res = ToolResult::ok(reference.to_string());
            res.image = Some(ImageAttachment {
                name: file.clone(),
                media_type: media.to_string(),
                data_base64: base64::engine::general_purpose::STANDARD.encode(&bytes),
            });
            res
        }
        (None, Some(Value::String(s))) => ToolResult::ok(s.clone()),
        (None, Some(v)) => ToolResult::ok(v.to_string()),
        (None, None) => {
            return Err(FixtureError::BadEntry {
                tool: entry.tool.clone(),
                message: "result has neither body nor image_file".into(),
            })
        }
    };
    result.outcome = r.outcome;
    if r.outcome != ToolOutcome::Ok && serde_json::from_str::<Value>(&result.body).is_err() {
        return Err(FixtureError::BadEntry {
            tool: entry.tool.clone(),
            message: "error results must carry a JSON error document".into(),
        });
    }
    if let Some(urls) = &r.urls {
        result.urls = urls.clone();
    }
    Ok(result)
}

#[async_trait]
impl ToolBackend for FixtureBackend {
    async fn call(&self, call: &ToolCall) -> ToolResult {
        let digest = arguments_digest(&call.arguments);
        match self.table.get(&(call.tool_name.clone(), digest.clone())) {
            Some(r) => r.clone(),
            None => ToolResult::error(
                "fixture_miss",
                format!("no fixture for call: {} {}", call.tool_name, digest),
                json!({"tool": call.tool_name, "arguments_digest": digest}),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(tool: &str, args: Value) -> ToolCall {
        ToolCall { node_id: "n".into(), agent_id: "a".into(), tool_name: tool.into(), arguments: args, ordinal: 0 }
    }

    #[tokio::test]
    async fn replays_by_canonical_arguments() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.png"), [0x89, b'P', b'N', b'G']).unwrap();
        let index = json!({"entries": [
            {"tool": "nhc_search_storms", "args": {"name": "Ian", "year": 2022}, "result": {"body": {"storms": [{"id": "AL092022"}]}}},
            {"tool": "stofs_max_total_water_level", "args": {}, "result": {"image_file": "p.png"}},
            {"tool": "down", "args": {}, "result": {"outcome": "error", "body": {"error": {"type": "x"}}}}
        ]});
        std::fs::write(dir.path().join("index.json"), index.to_string()).unwrap();
        let b = FixtureBackend::from_dir(dir.path()).unwrap();
        assert_eq!(b.len(), 3);

        let r = b.call(&call("nhc_search_storms", json!({"year": 2022, "name": "Ian"}))).await;
        assert_eq!(r.outcome, ToolOutcome::Ok);
        assert!(r.body.contains("AL092022"));

        let r = b.call(&call("stofs_max_total_water_level", json!({}))).await;
        let img = r.image.unwrap();
        assert_eq!(img.media_type, "image/png");
        assert!(r.body.contains("\"image\":\"p.png\""));

        let r = b.call(&call("down", json!({}))).await;
        assert_eq!(r.outcome, ToolOutcome::Error);

        let r = b.call(&call("nhc_search_storms", json!({"name": "Bob"}))).await;
        assert_eq!(r.outcome, ToolOutcome::Error);
        assert!(r.body.contains("no fixture for call: nhc_search_storms"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let index: FixtureIndex = serde_json::from_value(json!({"entries": [
            {"tool": "t", "args": {"a": 1, "b": 2}, "result": {"body": "x"}},
            {"tool": "t", "args": {"b": 2, "a": 1}, "result": {"body": "y"}}
        ]}))
        .unwrap();
        assert!(matches!(
            FixtureBackend::from_index(index, Path::new(".")),
            Err(FixtureError::Duplicate { .. })
        ));
    }
}
