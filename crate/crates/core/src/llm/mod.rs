//! Chat-with-tools backend contract, token accounting and backends.

mod http;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::registry::ToolSchema;

pub use http::{Dialect, HttpBackend, ProviderConfig};
pub use scripted::{Exchange, Matcher, Respond, ScenarioScript, ScriptedBackend, ScriptedToolCall};

/// Pipeline stage used for routing scripted replies and for token accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Architect,
    Specialist,
    Consolidator,
    Reporter,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Architect, Stage::Specialist, Stage::Consolidator, Stage::Reporter];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Architect => "architect",
            Stage::Specialist => "specialist",
            Stage::Consolidator => "consolidator",
            Stage::Reporter => "reporter",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self { input_tokens, output_tokens }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for Usage {
    type Output = Usage;
    fn add(self, rhs: Usage) -> Usage {
        Usage::new(self.input_tokens + rhs.input_tokens, self.output_tokens + rhs.output_tokens)
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

/// Per-stage token totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UsageLedger {
    pub by_stage: BTreeMap<Stage, Usage>,
}

impl UsageLedger {
    pub fn accumulate(&mut self, stage: Stage, usage: Usage) {
        *self.by_stage.entry(stage).or_default() += usage;
    }

    pub fn merge(&mut self, other: &UsageLedger) {
        for (stage, usage) in &other.by_stage {
            self.accumulate(*stage, *usage);
        }
    }

    pub fn stage(&self, stage: Stage) -> Usage {
        self.by_stage.get(&stage).copied().unwrap_or_default()
    }

    pub fn total(&self) -> Usage {
        self.by_stage.values().copied().sum()
    }

    /// Fraction of all tokens (input plus output) spent in `stage`.
    pub fn share(&self, stage: Stage) -> f64 {
        let total = self.total().total();
        if total == 0 {
            return 0.0;
        }
        self.stage(stage).total() as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub name: String,
    pub media_type: String,
    pub data_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { image: ImageAttachment },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub parts: Vec<ContentPart>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            parts: vec![ContentPart::Text { text: text.into() }],
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<ImageAttachment>) -> Self {
        let mut m = Self::user(text);
        m.parts.extend(images.into_iter().map(|image| ContentPart::Image { image }));
        m
    }

    pub fn assistant(text: impl Into<String>, tool_calls: Vec<ToolCallRequest>) -> Self {
        Self {
            role: MessageRole::Assistant,
            parts: vec![ContentPart::Text { text: text.into() }],
            tool_calls,
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Tool,
            parts: vec![ContentPart::Text { text: text.into() }],
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn has_images(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, ContentPart::Image { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub stage: Stage,
    pub system: String,
    pub messages: Vec<Message>,
    #[serde(default)]
    pub tools: Vec<ToolSchema>,
    #[serde(default)]
    pub model_id: String,
    /// Graph node issuing the request, when there is one.
    #[serde(default)]
    pub node_id: Option<String>,
    #[serde(default)]
    pub agent_id: Option<String>,
}

impl ChatRequest {
    pub fn new(stage: Stage, system: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            stage,
            system: system.into(),
            messages,
            tools: Vec::new(),
            model_id: String::new(),
            node_id: None,
            agent_id: None,
        }
    }

    pub fn with_node(mut self, node_id: &str, agent_id: &str) -> Self {
        self.node_id = Some(node_id.to_string());
        self.agent_id = Some(agent_id.to_string());
        self
    }

    pub fn with_tools(mut self, tools: Vec<ToolSchema>) -> Self {
        self.tools = tools;
        self
    }

    pub fn has_images(&self) -> bool {
        self.messages.iter().any(Message::has_images)
    }

    /// System prompt and every text part, joined. Scripted matchers search this.
    pub fn transcript_text(&self) -> String {
        let mut out = self.system.clone();
        for m in &self.messages {
            out.push('\n');
            out.push_str(&m.text());
        }
        out
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.tools.is_empty() && self.stage != Stage::Specialist {
            return Err(LlmError::InvalidRequest(format!(
                "tools offered at stage {}",
                self.stage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("unscripted exchange: stage {stage}, node {node}, step {step}")]
    Unscripted { stage: Stage, node: String, step: usize },
    #[error("multimodal unsupported by {0}")]
    MultimodalUnsupported(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid script: {0}")]
    Script(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed ({status}): {body}")]
    Auth { status: u16, body: String },
    #[error("provider returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("could not decode provider response: {0}")]
    Decode(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingKey(String),
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Whether image parts may be sent.
    fn multimodal(&self) -> bool {
        true
    }

    fn name(&self) -> &str;
}

pub(crate) fn check_capabilities(backend: &dyn ChatBackend, req: &ChatRequest) -> Result<(), LlmError> {
    req.validate()?;
    if req.has_images() && !backend.multimodal() {
        return Err(LlmError::MultimodalUnsupported(backend.name().to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_six_totals() {
        let mut ledger = UsageLedger::default();
        ledger.accumulate(Stage::Architect, Usage::new(21_533, 1_572));
        ledger.accumulate(Stage::Specialist, Usage::new(468_643, 17_515));
        ledger.accumulate(Stage::Consolidator, Usage::new(4_697, 1_869));
        ledger.accumulate(Stage::Reporter, Usage::new(9_227, 2_438));
        assert_eq!(ledger.total(), Usage::new(504_100, 23_394));
        assert_eq!(ledger.total().total(), 527_494);
        assert_eq!(ledger.stage(Stage::Specialist).total(), 486_158);
        assert!((ledger.share(Stage::Specialist) * 100.0 - 92.2).abs() < 0.05);
    }

    #[test]
    fn empty_ledger_is_zero() {
        let ledger = UsageLedger::default();
        assert_eq!(ledger.total(), Usage::default());
        assert_eq!(ledger.share(Stage::Reporter), 0.0);
    }

    #[test]
    fn tools_outside_specialist_stage_are_rejected() {
        let req = ChatRequest::new(Stage::Reporter, "s", vec![]).with_tools(vec![ToolSchema {
            name: "x".into(),
            description: String::new(),
            parameters: serde_json::json!({}),
            extra: Default::default(),
        }]);
        assert!(matches!(req.validate(), Err(LlmError::InvalidRequest(_))));
    }
}
