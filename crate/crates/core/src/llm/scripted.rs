use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{check_capabilities, ChatBackend, ChatRequest, ChatResponse, LlmError, Stage, ToolCallRequest, Usage};

/// Which request an exchange answers.
///
/// `ordinal` counts calls per (stage, node); `pattern` is a regular
/// expression searched in the system prompt and message texts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matcher {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToolCall {
    pub name: String,
    #[serde(default = "empty_object")]
    pub arguments: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respond {
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptedToolCall>,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub respond: Respond,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeatable: bool,
}

/// A scenario script: scripted exchanges plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_true")]
    pub multimodal: bool,
    pub exchanges: Vec<Exchange>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_true() -> bool {
    true
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Script(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn empty() -> Self {
        Self {
            name: String::new(),
            multimodal: true,
            exchanges: Vec::new(),
            extra: Map::new(),
        }
    }

    /// Sum of every scripted usage entry.
    pub fn total_usage(&self) -> Usage {
        self.exchanges.iter().map(|e| e.respond.usage).sum()
    }
}

struct Compiled {
    exchange: Exchange,
    pattern: Option<Regex>,
}

#[derive(Default)]
struct ReplayState {
    consumed: Vec<bool>,
    counters: HashMap<(Stage, String), usize>,
}

/// Replays a scenario script deterministically.
pub struct ScriptedBackend {
    name: String,
    multimodal: bool,
    entries: Vec<Compiled>,
    state: Mutex<ReplayState>,
}

impl ScriptedBackend {
    pub fn new(script: ScenarioScript) -> Result<Self, LlmError> {
        let mut entries = Vec::with_capacity(script.exchanges.len());
        for (i, exchange) in script.exchanges.into_iter().enumerate() {
            if let Some(j) = entries
                .iter()
                .position(|c: &Compiled| c.exchange.matcher == exchange.matcher)
            {
                return Err(LlmError::Script(format!(
                    "exchanges {j} and {i} have identical matchers ({})",
                    serde_json::to_string(&exchange.matcher).unwrap_or_default()
                )));
            }
            let pattern = match &exchange.matcher.pattern {
                Some(p) => Some(
                    Regex::new(p).map_err(|e| LlmError::Script(format!("exchange {i}: {e}")))?,
                ),
                None => None,
            };
            entries.push(Compiled { exchange, pattern });
        }
        let name = if script.name.is_empty() { "scripted".to_string() } else { format!("scripted:{}", script.name) };
        Ok(Self {
            name,
            multimodal: script.multimodal,
            state: Mutex::new(ReplayState {
                consumed: vec![false; entries.len()],
                counters: HashMap::new(),
            }),
            entries,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        Self::new(ScenarioScript::from_json(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Self::new(ScenarioScript::from_path(path)?)
    }

    /// Number of exchanges not yet consumed (repeatable ones included).
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("replay state");
        state.consumed.iter().filter(|c| !**c).count()
    }
}

fn matches(m: &Matcher, pattern: Option<&Regex>, req: &ChatRequest, ordinal: usize, text: &str) -> bool {
    m.stage == req.stage
        && m.agent.as_deref().is_none_or(|a| req.agent_id.as_deref() == Some(a))
        && m.node.as_deref().is_none_or(|n| req.node_id.as_deref() == Some(n))
        && m.ordinal.is_none_or(|o| o == ordinal)
        && pattern.is_none_or(|p| p.is_match(text))
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        check_capabilities(self, req)?;
        let text = req.transcript_text();
        let node = req.node_id.clone().unwrap_or_default();

        let mut state = self.state.lock().expect("replay state");
        let ordinal = {
            let counter = state.counters.entry((req.stage, node.clone())).or_insert(0);
            let o = *counter;
            *counter += 1;
            o
        };
        let hit = self.entries.iter().enumerate().position(|(i, c)| {
            (!state.consumed[i] || c.exchange.repeatable)
                && matches(&c.exchange.matcher, c.pattern.as_ref(), req, ordinal, &text)
        });
        let Some(i) = hit else {
            return Err(LlmError::Unscripted {
                stage: req.stage,
                node: if node.is_empty() { "-".into() } else { node },
                step: ordinal,
            });
        };
        state.consumed[i] = true;
        drop(state);

        let respond = &self.entries[i].exchange.respond;
        let tool_calls = respond
            .tool_calls
            .iter()
            .enumerate()
            .map(|(k, c)| ToolCallRequest {
                id: format!("call_{ordinal}_{k}"),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        Ok(ChatResponse {
            content: respond.content.clone(),
            tool_calls,
            usage: respond.usage,
        })
    }

    fn multimodal(&self) -> bool {
        self.multimodal
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ImageAttachment, Message};

    fn script(v: Value) -> ScriptedBackend {
        ScriptedBackend::from_json(&v.to_string()).unwrap()
    }

    fn req(stage: Stage, node: &str) -> ChatRequest {
        ChatRequest::new(stage, "sys", vec![Message::user("hello")]).with_node(node, "a")
    }

    #[tokio::test]
    async fn empty_script_is_unscripted() {
        let b = ScriptedBackend::new(ScenarioScript::empty()).unwrap();
        let err = b.chat(&req(Stage::Reporter, "t*.l1.reporter")).await.unwrap_err();
        assert_eq!(err.to_string(), "unscripted exchange: stage reporter, node t*.l1.reporter, step 0");
    }

    #[tokio::test]
    async fn ordinals_count_per_node() {
        let b = script(serde_json::json!({"exchanges": [
            {"match": {"stage": "specialist", "node": "n1", "ordinal": 1}, "respond": {"content": "second", "usage": {"input_tokens": 3, "output_tokens": 4}}},
            {"match": {"stage": "specialist", "node": "n1", "ordinal": 0}, "respond": {"content": "first", "tool_calls": [{"name": "t", "arguments": {"x": 1}}]}},
            {"match": {"stage": "specialist", "node": "n2", "ordinal": 0}, "respond": {"content": "other"}}
        ]}));
        let r = b.chat(&req(Stage::Specialist, "n2")).await.unwrap();
        assert_eq!(r.content, "other");
        let r = b.chat(&req(Stage::Specialist, "n1")).await.unwrap();
        assert_eq!(r.content, "first");
        assert_eq!(r.tool_calls[0].id, "call_0_0");
        let r = b.chat(&req(Stage::Specialist, "n1")).await.unwrap();
        assert_eq!((r.content.as_str(), r.usage.total()), ("second", 7));
        assert!(b.chat(&req(Stage::Specialist, "n1")).await.is_err());
    }

    #[tokio::test]
    async fn pattern_entries_take_precedence_in_order() {
        let b = script(serde_json::json!({"exchanges": [
            {"match": {"stage": "consolidator", "pattern": "DATA UNAVAILABLE"}, "respond": {"content": "degraded"}},
            {"match": {"stage": "consolidator"}, "respond": {"content": "normal"}, "repeatable": true}
        ]}));
        assert_eq!(b.chat(&req(Stage::Consolidator, "c")).await.unwrap().content, "normal");
        assert_eq!(b.chat(&req(Stage::Consolidator, "c")).await.unwrap().content, "normal");
        let mut r = req(Stage::Consolidator, "d");
        r.messages.push(Message::user("DATA UNAVAILABLE: usgs: down"));
        assert_eq!(b.chat(&r).await.unwrap().content, "degraded");
    }

    #[test]
    fn identical_matchers_are_rejected() {
        let v = serde_json::json!({"exchanges": [
            {"match": {"stage": "reporter"}, "respond": {"content": "a"}},
            {"match": {"stage": "reporter"}, "respond": {"content": "b"}}
        ]});
        assert!(matches!(ScriptedBackend::from_json(&v.to_string()), Err(LlmError::Script(_))));
    }

    #[tokio::test]
    async fn text_only_script_rejects_images() {
        let b = script(serde_json::json!({"multimodal": false, "exchanges": [
            {"match": {"stage": "consolidator"}, "respond": {"content": "x"}}
        ]}));
        let img = ImageAttachment { name: "a.png".into(), media_type: "image/png".into(), data_base64: String::new() };
        let r = ChatRequest::new(Stage::Consolidator, "s", vec![Message::user_with_images("look", vec![img])]);
        assert_eq!(b.chat(&r).await.unwrap_err(), LlmError::MultimodalUnsupported("scripted".into()));
    }

    #[tokio::test]
    async fn replay_is_identical() {
        let v = serde_json::json!({"exchanges": [
            {"match": {"stage": "reporter"}, "respond": {"content": "answer", "usage": {"input_tokens": 5, "output_tokens": 1}}}
        ]});
        let a = script(v.clone()).chat(&req(Stage::Reporter, "r")).await.unwrap();
        let b = script(v).chat(&req(Stage::Reporter, "r")).await.unwrap();
        assert_eq!(a, b);
    }
}
