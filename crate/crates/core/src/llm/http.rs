use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_capabilities, ChatBackend, ChatRequest, ChatResponse, ContentPart, LlmError, Message, MessageRole,
    ToolCallRequest, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `/v1/chat/completions` style.
    Openai,
    /// `/v1/messages` style.
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub dialect: Dialect,
    /// Full request URL.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_true")]
    pub multimodal: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_true() -> bool {
    true
}
fn default_attempts() -> u32 {
    3
}
fn default_timeout() -> u64 {
    120
}
fn default_backoff() -> u64 {
    500
}
fn default_max_tokens() -> u32 {
    4096
}

impl ProviderConfig {
    pub fn new(dialect: Dialect, endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            dialect,
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_key_env: None,
            multimodal: true,
            max_attempts: default_attempts(),
            timeout_secs: default_timeout(),
            backoff_ms: default_backoff(),
            max_tokens: default_max_tokens(),
        }
    }
}

/// Chat backend speaking an OpenAI- or Anthropic-compatible wire protocol.
pub struct HttpBackend {
    config: ProviderConfig,
    client: reqwest::Client,
    api_key: Option<String>,
    name: String,
}

impl HttpBackend {
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingKey(var.clone()))?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let name = format!("{:?}:{}", config.dialect, config.model_id).to_lowercase();
        Ok(Self { config, client, api_key, name })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn body(&self, req: &ChatRequest) -> Value {
        let model = if req.model_id.is_empty() { &self.config.model_id } else { &req.model_id };
        match self.config.dialect {
            Dialect::Openai => openai_body(req, model, self.config.max_tokens),
            Dialect::Anthropic => anthropic_body(req, model, self.config.max_tokens),
        }
    }

    async fn attempt(&self, body: &Value) -> Result<Value, LlmError> {
        let mut rb = self.client.post(&self.config.endpoint).json(body);
        match (self.config.dialect, &self.api_key) {
            (Dialect::Openai, Some(k)) => rb = rb.bearer_auth(k),
            (Dialect::Anthropic, Some(k)) => rb = rb.header("x-api-key", k),
            _ => {}
        }
        if self.config.dialect == Dialect::Anthropic {
            rb = rb.header("anthropic-version", "2023-06-01");
        }
        let resp = rb.send().await.map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| LlmError::Transport(e.to_string()))?;
        if status == 401 || status == 403 {
            return Err(LlmError::Auth { status, body: excerpt(&text) });
        }
        if status >= 400 {
            return Err(LlmError::Http { status, body: excerpt(&text) });
        }
        serde_json::from_str(&text).map_err(|e| LlmError::Decode(e.to_string()))
    }
}

fn excerpt(s: &str) -> String {
    s.chars().take(512).collect()
}

fn retryable(err: &LlmError) -> bool {
    match err {
        LlmError::Transport(_) => true,
        LlmError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
        _ => false,
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        check_capabilities(self, req)?;
        let body = self.body(req);
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                tokio::time::sleep(Duration::from_millis(wait)).await;
            }
            match self.attempt(&body).await {
                Ok(v) => {
                    return match self.config.dialect {
                        Dialect::Openai => parse_openai(&v),
                        Dialect::Anthropic => parse_anthropic(&v),
                    }
                }
                Err(e) if retryable(&e) => {
                    tracing::warn!(attempt, error = %e, "chat attempt failed");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| LlmError::Transport("no attempt made".into())))
    }

    fn multimodal(&self) -> bool {
        self.config.multimodal
    }

    fn name(&self) -> &str {
        &self.name
    }
}

fn tool_result_text(m: &Message) -> String {
    m.text()
}

pub(crate) fn openai_body(req: &ChatRequest, model: &str, max_tokens: u32) -> Value {
    let mut messages = vec![json!({"role": "system", "content": req.system})];
    for m in &req.messages {
        match m.role {
            MessageRole::User => {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text { text } => json!({"type": "text", "text": text}),
                        ContentPart::Image { image } => json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{};base64,{}", image.media_type, image.data_base64)}
                        }),
                    })
                    .collect();
                messages.push(json!({"role": "user", "content": parts}));
            }
            MessageRole::Assistant => {
                let mut msg = json!({"role": "assistant", "content": m.text()});
                if !m.tool_calls.is_empty() {
                    msg["tool_calls"] = m
                        .tool_calls
                        .iter()
                        .map(|c| {
                            json!({"id": c.id, "type": "function",
                                   "function": {"name": c.name, "arguments": c.arguments.to_string()}})
                        })
                        .collect();
                }
                messages.push(msg);
            }
            MessageRole::Tool => messages.push(json!({
                "role": "tool",
                "tool_call_id": m.tool_call_id.clone().unwrap_or_default(),
                "content": tool_result_text(m),
            })),
        }
    }
    let mut body = json!({"model": model, "messages": messages, "max_tokens": max_tokens});
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
            .collect();
    }
    body
}

pub(crate) fn anthropic_body(req: &ChatRequest, model: &str, max_tokens: u32) -> Value {
    let mut messages: Vec<Value> = Vec::new();
    for m in &req.messages {
        let (role, blocks): (&str, Vec<Value>) = match m.role {
            MessageRole::User => (
                "user",
                m.parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text { text } => json!({"type": "text", "text": text}),
                        ContentPart::Image { image } => json!({
                            "type": "image",
                            "source": {"type": "base64", "media_type": image.media_type, "data": image.data_base64}
                        }),
                    })
                    .collect(),
            ),
            MessageRole::Assistant => {
                let mut blocks = Vec::new();
                let text = m.text();
                if !text.is_empty() {
                    blocks.push(json!({"type": "text", "text": text}));
                }
                for c in &m.tool_calls {
                    blocks.push(json!({"type": "tool_use", "id": c.id, "name": c.name, "input": c.arguments}));
                }
                ("assistant", blocks)
            }
            MessageRole::Tool => (
                "user",
                vec![json!({
                    "type": "tool_result",
                    "tool_use_id": m.tool_call_id.clone().unwrap_or_default(),
                    "content": tool_result_text(m),
                })],
            ),
        };
        // Consecutive same-role turns are merged; the protocol requires alternation.
        match messages.last_mut() {
            Some(last) if last["role"] == role => {
                last["content"].as_array_mut().expect("content array").extend(blocks);
            }
            _ => messages.push(json!({"role": role, "content": blocks})),
        }
    }
    let mut body = json!({"model": model, "system": req.system, "messages": messages, "max_tokens": max_tokens});
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| json!({"name": t.name, "description": t.description, "input_schema": t.parameters}))
            .collect();
    }
    body
}

fn count(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

pub(crate) fn parse_openai(v: &Value) -> Result<ChatResponse, LlmError> {
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Decode("no choices[0].message".into()))?;
    let mut tool_calls = Vec::new();
    for c in msg["tool_calls"].as_array().into_iter().flatten() {
        let raw = c.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
        let arguments = match raw {
            Value::String(s) if s.trim().is_empty() => json!({}),
            Value::String(s) => serde_json::from_str(&s).map_err(|e| LlmError::Decode(format!("tool arguments: {e}")))?,
            other => other,
        };
        tool_calls.push(ToolCallRequest {
            id: c["id"].as_str().unwrap_or_default().to_string(),
            name: c.pointer("/function/name").and_then(Value::as_str).unwrap_or_default().to_string(),
            arguments,
        });
    }
    Ok(ChatResponse {
        content: msg["content"].as_str().unwrap_or_default().to_string(),
        tool_calls,
        usage: Usage::new(count(&v["usage"]["prompt_tokens"]), count(&v["usage"]["completion_tokens"])),
    })
}

pub(crate) fn parse_anthropic(v: &Value) -> Result<ChatResponse, LlmError> {
    let blocks = v["content"]
        .as_array()
        .ok_or_else(|| LlmError::Decode("no content array".into()))?;
    let mut text = Vec::new();
    let mut tool_calls = Vec::new();
    for b in blocks {
        match b["type"].as_str() {
            Some("text") => text.push(b["text"].as_str().unwrap_or_default().to_string()),
            Some("tool_use") => tool_calls.push(ToolCallRequest {
                id: b["id"].as_str().unwrap_or_default().to_string(),
                name: b["name"].as_str().unwrap_or_default().to_string(),
                arguments: b["input"].clone(),
            }),
            _ => {}
        }
    }
    Ok(ChatResponse {
        content: text.join("\n"),
        tool_calls,
        usage: Usage::new(count(&v["usage"]["input_tokens"]), count(&v["usage"]["output_tokens"])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ImageAttachment, Stage};

    fn sample() -> ChatRequest {
        let img = ImageAttachment { name: "p.png".into(), media_type: "image/png".into(), data_base64: "AAA".into() };
        ChatRequest::new(
            Stage::Specialist,
            "sys",
            vec![
                Message::user_with_images("go", vec![img]),
                Message::assistant("", vec![ToolCallRequest { id: "c1".into(), name: "t".into(), arguments: json!({"a": 1}) }]),
                Message::tool("c1", "result"),
            ],
        )
    }

    #[test]
    fn openai_wire_shape() {
        let b = openai_body(&sample(), "m", 10);
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AAA");
        assert_eq!(b["messages"][2]["tool_calls"][0]["function"]["arguments"], "{\"a\":1}");
        assert_eq!(b["messages"][3]["tool_call_id"], "c1");
    }

    #[test]
    fn anthropic_wire_shape() {
        let b = anthropic_body(&sample(), "m", 10);
        assert_eq!(b["system"], "sys");
        assert_eq!(b["messages"][0]["content"][1]["source"]["data"], "AAA");
        assert_eq!(b["messages"][1]["content"][0]["type"], "tool_use");
        assert_eq!(b["messages"][2]["content"][0]["tool_use_id"], "c1");
    }

    #[test]
    fn parses_provider_usage() {
        let r = parse_openai(&json!({
            "choices": [{"message": {"content": null, "tool_calls": [{"id": "x", "function": {"name": "t", "arguments": "{\"k\":2}"}}]}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 3}
        }))
        .unwrap();
        assert_eq!(r.tool_calls[0].arguments, json!({"k": 2}));
        assert_eq!(r.usage, Usage::new(11, 3));

        let r = parse_anthropic(&json!({
            "content": [{"type": "text", "text": "hi"}, {"type": "tool_use", "id": "u", "name": "t", "input": {}}],
            "usage": {"input_tokens": 7, "output_tokens": 2}
        }))
        .unwrap();
        assert_eq!((r.content.as_str(), r.tool_calls.len(), r.usage.total()), ("hi", 1, 9));
    }
}
