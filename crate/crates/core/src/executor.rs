//! Runs a compiled graph: tracks, layer barriers, consolidation, cross-track
//! merge and the report, with every node and tool call in the ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::Utc;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::leg::{Leg, LegNode, LegStage, LegTrack, NodeKind, StageKind};
use crate::llm::{ChatBackend, ChatRequest, ChatResponse, ImageAttachment, LlmError, Message, Stage, Usage, UsageLedger};
use crate::prompts;
use crate::provenance::{sha256_hex, Ledger, NodeAnnotation, TraceId};
use crate::registry::Registry;
use crate::tools::{Dispatcher, FaultPlan, ToolBackend, ToolCall, ToolOutcome};

pub const DEFAULT_ROUND_CAP: usize = 8;
pub const DEFAULT_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    FixedGraph,
    NoConsolidation,
    NoReporter,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::FixedGraph,
        AblationVariant::NoConsolidation,
        AblationVariant::NoReporter,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::FixedGraph => "fixed_graph",
            AblationVariant::NoConsolidation => "no_consolidation",
            AblationVariant::NoReporter => "no_reporter",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AblationVariant::Full => "Full System",
            AblationVariant::FixedGraph => "Fixed Graph",
            AblationVariant::NoConsolidation => "No Consolidation",
            AblationVariant::NoReporter => "No Reporter",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown variant {s} (expected full, fixed_graph, no_consolidation or no_reporter)"))
    }
}

/// A block of context produced by one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brief {
    pub text: String,
    pub producer_node: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub source_briefs: Vec<String>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Model rounds a specialist may spend on tool calls.
    pub round_cap: usize,
    /// Specialists of one layer running at once.
    pub width: usize,
    /// Run the tracks of a parallel plan at the same time.
    pub concurrent_tracks: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            round_cap: DEFAULT_ROUND_CAP,
            width: DEFAULT_WIDTH,
            concurrent_tracks: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PlanProposed,
    Approved,
    NodeStarted,
    ToolCall,
    NodeFinished,
    Consolidated,
    Merged,
    Reported,
    Failed,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::PlanProposed => "plan_proposed",
            EventKind::Approved => "approved",
            EventKind::NodeStarted => "node_started",
            EventKind::ToolCall => "tool_call",
            EventKind::NodeFinished => "node_finished",
            EventKind::Consolidated => "consolidated",
            EventKind::Merged => "merged",
            EventKind::Reported => "reported",
            EventKind::Failed => "failed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Receives execution events as they happen.
pub trait Observer: Send + Sync {
    fn event(&self, kind: EventKind, payload: Value);
}

/// One model exchange, kept next to the ledger rather than inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub node_id: String,
    pub stage: Stage,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_ms: u64,
    pub per_node_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace_id: TraceId,
    pub variant: AblationVariant,
    pub final_text: String,
    pub per_node_outputs: BTreeMap<String, Brief>,
    pub timing: RunTiming,
    pub usage_by_stage: UsageLedger,
    /// Set when a model call failed; outputs produced before it are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    /// The material handed to the reporter (or returned in its place).
    #[serde(default)]
    pub reporter_input: Option<String>,
    /// Tool calls processed, denials included.
    pub dispatches: usize,
    #[serde(default)]
    pub transcripts: Vec<TranscriptEntry>,
}

impl RunResult {
    pub fn is_failed(&self) -> bool {
        self.failed.is_some()
    }

    pub fn outputs_of(&self, kind: NodeKind) -> impl Iterator<Item = &Brief> {
        self.per_node_outputs.values().filter(move |b| b.kind == kind)
    }

    /// Consolidator and merge briefs followed by the final text: the material
    /// source attribution is judged on.
    pub fn pipeline_text(&self) -> String {
        let mut parts: Vec<&str> = self
            .outputs_of(NodeKind::Consolidator)
            .chain(self.outputs_of(NodeKind::CrossTrackMerge))
            .map(|b| b.text.as_str())
            .collect();
        parts.push(&self.final_text);
        parts.join("\n\n")
    }
}

#[derive(Default)]
struct RunState {
    outputs: BTreeMap<String, Brief>,
    usage: UsageLedger,
    transcripts: Vec<TranscriptEntry>,
    per_node_ms: BTreeMap<String, u64>,
    failed: Option<String>,
}

/// What one track hands to the merge or the reporter.
struct TrackOutput {
    text: String,
    terminal: Vec<String>,
}

pub struct Executor {
    registry: Arc<Registry>,
    model: Arc<dyn ChatBackend>,
    tools: Arc<dyn ToolBackend>,
    ledger: Arc<Ledger>,
    config: ExecConfig,
    observer: Option<Arc<dyn Observer>>,
}

impl Executor {
    pub fn new(
        registry: Arc<Registry>,
        model: Arc<dyn ChatBackend>,
        tools: Arc<dyn ToolBackend>,
        ledger: Arc<Ledger>,
    ) -> Self {
        Self {
            registry,
            model,
            tools,
            ledger,
            config: ExecConfig::default(),
            observer: None,
        }
    }

    pub fn with_config(mut self, config: ExecConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn Observer>) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    /// Opens a fresh trace for `goal` and runs the graph under it.
    pub async fn execute(&self, leg: &Leg, goal: &str, variant: AblationVariant, fault: Option<FaultPlan>) -> RunResult {
        let trace = self.ledger.open_trace(goal);
        self.execute_in(trace, leg, goal, variant, fault).await
    }

    /// Runs the graph under an already opened trace.
    pub async fn execute_in(
        &self,
        trace: TraceId,
        leg: &Leg,
        goal: &str,
        variant: AblationVariant,
        fault: Option<FaultPlan>,
    ) -> RunResult {
        let clock = Instant::now();
        let run = Run {
            exec: self,
            trace: trace.clone(),
            goal,
            variant,
            dispatcher: Dispatcher::new(self.tools.clone(), fault, self.ledger.clone(), trace.clone()),
            state: Mutex::new(RunState::default()),
            permits: Semaphore::new(self.config.width.max(1)),
        };
        let (final_text, reporter_input) = run.go(leg).await;
        let dispatches = run.dispatcher.dispatched();
        let state = run.state.into_inner().expect("run state");
        if let Some(err) = &state.failed {
            self.emit(EventKind::Failed, json!({"error": err}));
        }
        RunResult {
            trace_id: trace,
            variant,
            final_text,
            per_node_outputs: state.outputs,
            timing: RunTiming {
                wall_ms: clock.elapsed().as_millis() as u64,
                per_node_ms: state.per_node_ms,
            },
            usage_by_stage: state.usage,
            failed: state.failed,
            reporter_input,
            dispatches,
            transcripts: state.transcripts,
        }
    }

    fn emit(&self, kind: EventKind, payload: Value) {
        if let Some(o) = &self.observer {
            o.event(kind, payload);
        }
    }
}

/// Ledger stage for a node kind. Image and merge count as consolidation.
pub fn stage_of(kind: NodeKind) -> Stage {
    match kind {
        NodeKind::Specialist => Stage::Specialist,
        NodeKind::Consolidator | NodeKind::Image | NodeKind::CrossTrackMerge => Stage::Consolidator,
        NodeKind::Reporter => Stage::Reporter,
    }
}

fn sections<'a>(items: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(head, text)| format!("### {head}\n\n{text}"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

struct NodeOutput {
    brief: Brief,
    images: Vec<ImageAttachment>,
}

struct Run<'a> {
    exec: &'a Executor,
    trace: TraceId,
    goal: &'a str,
    variant: AblationVariant,
    dispatcher: Dispatcher,
    state: Mutex<RunState>,
    permits: Semaphore,
}

impl Run<'_> {
    fn failed(&self) -> bool {
        self.state.lock().expect("run state").failed.is_some()
    }

    fn fail(&self, message: String) {
        let mut s = self.state.lock().expect("run state");
        s.failed.get_or_insert(message);
    }

    async fn chat(&self, node: &LegNode, req: ChatRequest) -> Result<ChatResponse, LlmError> {
        let req = req.with_node(&node.node_id, &node.agent_id);
        let resp = self.exec.model.chat(&req).await?;
        let mut s = self.state.lock().expect("run state");
        s.usage.accumulate(req.stage, resp.usage);
        s.transcripts.push(TranscriptEntry {
            node_id: node.node_id.clone(),
            stage: req.stage,
            request: req,
            response: resp.clone(),
        });
        Ok(resp)
    }

    /// Runs one node body, then annotates, times and stores its output.
    async fn node<F>(&self, node: &LegNode, inputs: &str, body: F) -> Option<NodeOutput>
    where
        F: std::future::Future<Output = Result<NodeOutput, String>>,
    {
        let stage = stage_of(node.kind);
        self.exec.emit(
            EventKind::NodeStarted,
            json!({"node_id": node.node_id, "agent_id": node.agent_id, "kind": node.kind}),
        );
        let started_at = Utc::now();
        let clock = Instant::now();
        let outcome = body.await;
        let duration_ms = clock.elapsed().as_millis() as u64;
        let finished_at = Utc::now();
        let (brief, images, error) = match outcome {
            Ok(out) => (out.brief, out.images, None),
            Err(e) => (
                Brief {
                    text: String::new(),
                    producer_node: node.node_id.clone(),
                    kind: node.kind,
                    source_briefs: Vec::new(),
                    usage: Usage::default(),
                    error: Some(e.clone()),
                },
                Vec::new(),
                Some(e),
            ),
        };
        let annotation = NodeAnnotation {
            trace_id: self.trace.clone(),
            seq: 0,
            node_id: node.node_id.clone(),
            agent_id: node.agent_id.clone(),
            stage,
            inputs_digest: sha256_hex(inputs.as_bytes()),
            output_digest: sha256_hex(brief.text.as_bytes()),
            started_at,
            finished_at,
            duration_ms,
            error: error.clone(),
        };
        let mut error = error;
        if let Err(e) = self.exec.ledger.annotate_node(annotation) {
            error.get_or_insert(e.to_string());
        }
        self.exec.emit(
            EventKind::NodeFinished,
            json!({
                "node_id": node.node_id,
                "kind": node.kind,
                "duration_ms": duration_ms,
                "error": error,
                "usage": brief.usage,
            }),
        );
        {
            let mut s = self.state.lock().expect("run state");
            s.per_node_ms.insert(node.node_id.clone(), duration_ms);
            s.outputs.insert(node.node_id.clone(), brief.clone());
        }
        match error {
            Some(e) => {
                self.fail(format!("node {}: {e}", node.node_id));
                None
            }
            None => Some(NodeOutput { brief, images }),
        }
    }

    async fn go(&self, leg: &Leg) -> (String, Option<String>) {
        let tracks: Vec<Option<TrackOutput>> = if self.exec.config.concurrent_tracks {
            join_all(leg.tracks.iter().map(|t| self.track(t))).await
        } else {
            let mut out = Vec::new();
            for t in &leg.tracks {
                out.push(self.track(t).await);
            }
            out
        };
        if self.failed() {
            return (String::new(), None);
        }
        let tracks: Vec<TrackOutput> = tracks.into_iter().flatten().collect();

        let brief = match &leg.merge {
            Some(node) => match self.merge(node, leg, &tracks).await {
                Some(b) => b,
                None => return (String::new(), None),
            },
            None => tracks.into_iter().next().map(|t| t.text).unwrap_or_default(),
        };

        if self.variant == AblationVariant::NoReporter {
            return (brief.clone(), Some(brief));
        }
        let node = &leg.reporter;
        let reporter = self.exec.registry.agent(&node.agent_id).map(|a| a.system_prompt.clone()).unwrap_or_default();
        let prompt = prompts::render(prompts::REPORTER, &[("goal", self.goal), ("brief", &brief)]);
        let out = self
            .node(node, &prompt, async {
                let resp = self
                    .chat(node, ChatRequest::new(Stage::Reporter, reporter, vec![Message::user(prompt.clone())]))
                    .await
                    .map_err(|e| e.to_string())?;
                Ok(NodeOutput {
                    brief: Brief {
                        text: resp.content,
                        producer_node: node.node_id.clone(),
                        kind: NodeKind::Reporter,
                        source_briefs: Vec::new(),
                        usage: resp.usage,
                        error: None,
                    },
                    images: Vec::new(),
                })
            })
            .await;
        match out {
            Some(o) => {
                self.exec.emit(EventKind::Reported, json!({"node_id": node.node_id, "chars": o.brief.text.len()}));
                (o.brief.text, Some(brief))
            }
            None => (String::new(), Some(brief)),
        }
    }

    async fn merge(&self, node: &LegNode, leg: &Leg, tracks: &[TrackOutput]) -> Option<String> {
        let heads: Vec<String> = leg
            .tracks
            .iter()
            .enumerate()
            .map(|(i, t)| format!("Track {}: {}", i + 1, t.goal_text))
            .collect();
        let inputs = sections(heads.iter().map(String::as_str).zip(tracks.iter().map(|t| t.text.as_str())));
        let sources: Vec<String> = tracks.iter().flat_map(|t| t.terminal.clone()).collect();
        let system = self.exec.registry.agent(&node.agent_id).map(|a| a.system_prompt.clone()).unwrap_or_default();
        let prompt = prompts::render(prompts::MERGE, &[("goal", self.goal), ("inputs", &inputs)]);
        let concat = self.variant == AblationVariant::NoConsolidation;
        let out = self
            .node(node, &inputs, async {
                let (text, usage) = if concat {
                    (inputs.clone(), Usage::default())
                } else {
                    let resp = self
                        .chat(node, ChatRequest::new(Stage::Consolidator, system, vec![Message::user(prompt.clone())]))
                        .await
                        .map_err(|e| e.to_string())?;
                    (resp.content, resp.usage)
                };
                Ok(NodeOutput {
                    brief: Brief {
                        text,
                        producer_node: node.node_id.clone(),
                        kind: NodeKind::CrossTrackMerge,
                        source_briefs: sources.clone(),
                        usage,
                        error: None,
                    },
                    images: Vec::new(),
                })
            })
            .await?;
        self.exec.emit(EventKind::Merged, json!({"node_id": node.node_id, "source_briefs": sources}));
        Some(out.brief.text)
    }

    async fn track(&self, track: &LegTrack) -> Option<TrackOutput> {
        let goal = if track.goal_text.trim().is_empty() { self.goal } else { track.goal_text.as_str() };
        let mut context: Vec<String> = Vec::new();
        let mut terminal: Vec<String> = Vec::new();
        let mut stages = track.stages.iter().peekable();
        while let Some(stage) = stages.next() {
            if stage.kind != StageKind::Specialists {
                continue;
            }
            let image = stages.next_if(|s| s.kind == StageKind::Image);
            let consolidator = stages.next_if(|s| s.kind == StageKind::Consolidator);
            let layer = self.layer(goal, &context, stage, image, consolidator).await?;
            if layer.replaces_context {
                context = vec![layer.text];
            } else {
                context.push(layer.text);
            }
            terminal = vec![layer.producer];
        }
        Some(TrackOutput {
            text: context.join("\n\n"),
            terminal,
        })
    }

    /// One plan layer: specialists behind a barrier, then the image node and
    /// the consolidator when the graph has them.
    async fn layer(
        &self,
        goal: &str,
        context: &[String],
        specialists: &LegStage,
        image: Option<&LegStage>,
        consolidator: Option<&LegStage>,
    ) -> Option<LayerOutput> {
        let snapshot = context.join("\n\n");
        let outs = join_all(specialists.nodes.iter().map(|n| self.specialist(n, goal, &snapshot))).await;
        let outs: Vec<(&LegNode, NodeOutput)> = specialists
            .nodes
            .iter()
            .zip(outs)
            .map(|(n, o)| o.map(|o| (n, o)))
            .collect::<Option<_>>()?;
        let layer_ids: Vec<String> = outs.iter().map(|(n, _)| n.node_id.clone()).collect();

        let producer = |id: &str| {
            self.exec
                .registry
                .get(id)
                .map(|a| a.produces_images)
                .unwrap_or(false)
        };
        let mut inputs: Vec<(String, String)> = Vec::new();
        let mut raw: Vec<(String, String)> = outs
            .iter()
            .map(|(n, o)| (n.node_id.clone(), o.brief.text.clone()))
            .collect();
        match image.and_then(|s| s.nodes.first()) {
            Some(img) => {
                let producers: Vec<&(&LegNode, NodeOutput)> = outs.iter().filter(|(n, _)| producer(&n.agent_id)).collect();
                for (n, o) in outs.iter().filter(|(n, _)| !producer(&n.agent_id)) {
                    inputs.push((n.node_id.clone(), o.brief.text.clone()));
                }
                let narrative = self.image(img, goal, &producers).await?;
                inputs.push((img.node_id.clone(), narrative.clone()));
                raw.push((img.node_id.clone(), narrative));
            }
            None => inputs = raw.clone(),
        }

        let Some(cons) = consolidator.and_then(|s| s.nodes.first()) else {
            let (producer_id, text) = inputs.pop().expect("layer has output");
            return Some(LayerOutput {
                text,
                producer: producer_id,
                replaces_context: false,
            });
        };

        if self.variant == AblationVariant::NoConsolidation {
            let text = sections(raw.iter().map(|(h, t)| (h.as_str(), t.as_str())));
            let out = self
                .node(cons, &text, async {
                    Ok(NodeOutput {
                        brief: Brief {
                            text: text.clone(),
                            producer_node: cons.node_id.clone(),
                            kind: NodeKind::Consolidator,
                            source_briefs: layer_ids.clone(),
                            usage: Usage::default(),
                            error: None,
                        },
                        images: Vec::new(),
                    })
                })
                .await?;
            return Some(LayerOutput {
                text: out.brief.text,
                producer: cons.node_id.clone(),
                replaces_context: false,
            });
        }

        let joined = sections(inputs.iter().map(|(h, t)| (h.as_str(), t.as_str())));
        let system = self.exec.registry.agent(&cons.agent_id).map(|a| a.system_prompt.clone()).unwrap_or_default();
        let prompt = prompts::render(
            prompts::CONSOLIDATOR,
            &[("goal", goal), ("context", if snapshot.is_empty() { "(none)" } else { &snapshot }), ("inputs", &joined)],
        );
        let passthrough = inputs.len() == 1;
        let out = self
            .node(cons, &prompt, async {
                let (text, usage) = if passthrough {
                    // A single input needs no fusion.
                    (inputs[0].1.clone(), Usage::default())
                } else {
                    let resp = self
                        .chat(cons, ChatRequest::new(Stage::Consolidator, system, vec![Message::user(prompt.clone())]))
                        .await
                        .map_err(|e| e.to_string())?;
                    (resp.content, resp.usage)
                };
                Ok(NodeOutput {
                    brief: Brief {
                        text,
                        producer_node: cons.node_id.clone(),
                        kind: NodeKind::Consolidator,
                        source_briefs: layer_ids.clone(),
                        usage,
                        error: None,
                    },
                    images: Vec::new(),
                })
            })
            .await?;
        self.exec.emit(
            EventKind::Consolidated,
            json!({"node_id": cons.node_id, "source_briefs": layer_ids, "passthrough": passthrough}),
        );
        Some(LayerOutput {
            text: out.brief.text,
            producer: cons.node_id.clone(),
            replaces_context: !passthrough || snapshot.is_empty(),
        })
    }

    async fn image(&self, node: &LegNode, goal: &str, producers: &[&(&LegNode, NodeOutput)]) -> Option<String> {
        let inputs = sections(producers.iter().map(|(n, o)| (n.node_id.as_str(), o.brief.text.as_str())));
        let images: Vec<ImageAttachment> = producers.iter().flat_map(|(_, o)| o.images.clone()).collect();
        let sources: Vec<String> = producers.iter().map(|(n, _)| n.node_id.clone()).collect();
        let system = self.exec.registry.agent(&node.agent_id).map(|a| a.system_prompt.clone()).unwrap_or_default();
        let prompt = prompts::render(prompts::IMAGE, &[("goal", goal), ("inputs", &inputs)]);
        let digest_input = format!(
            "{prompt}\n{}",
            images.iter().map(|i| sha256_hex(i.data_base64.as_bytes())).collect::<Vec<_>>().join(",")
        );
        let out = self
            .node(node, &digest_input, async {
                let resp = self
                    .chat(
                        node,
                        ChatRequest::new(Stage::Consolidator, system, vec![Message::user_with_images(prompt.clone(), images.clone())]),
                    )
                    .await
                    .map_err(|e| e.to_string())?;
                Ok(NodeOutput {
                    brief: Brief {
                        text: resp.content,
                        producer_node: node.node_id.clone(),
                        kind: NodeKind::Image,
                        source_briefs: sources.clone(),
                        usage: resp.usage,
                        error: None,
                    },
                    images: Vec::new(),
                })
            })
            .await?;
        Some(out.brief.text)
    }

    async fn specialist(&self, node: &LegNode, goal: &str, context: &str) -> Option<NodeOutput> {
        let _permit = self.permits.acquire().await.expect("semaphore open");
        let prompt = prompts::render(
            prompts::SPECIALIST,
            &[("goal", goal), ("context", if context.is_empty() { "(none)" } else { context })],
        );
        self.node(node, &prompt, self.tool_loop(node, prompt.clone())).await
    }

    async fn tool_loop(&self, node: &LegNode, prompt: String) -> Result<NodeOutput, String> {
        let agent = self.exec.registry.agent(&node.agent_id).map_err(|e| e.to_string())?;
        let mut messages = vec![Message::user(prompt)];
        let mut usage = Usage::default();
        let mut images = Vec::new();
        let mut ordinal = 0usize;
        let mut ok_calls = 0usize;
        let mut first_error: Option<String> = None;
        let mut final_text: Option<String> = None;
        let mut last_text = String::new();

        for _ in 0..self.exec.config.round_cap.max(1) {
            let req = ChatRequest::new(Stage::Specialist, agent.system_prompt.clone(), messages.clone())
                .with_tools(agent.tool_schemas.clone());
            let resp = self.chat(node, req).await.map_err(|e| e.to_string())?;
            usage += resp.usage;
            if resp.tool_calls.is_empty() {
                final_text = Some(resp.content);
                break;
            }
            last_text = resp.content.clone();
            messages.push(Message::assistant(resp.content, resp.tool_calls.clone()));
            for tc in resp.tool_calls {
                let call = ToolCall {
                    node_id: node.node_id.clone(),
                    agent_id: node.agent_id.clone(),
                    tool_name: tc.name.clone(),
                    arguments: tc.arguments.clone(),
                    ordinal,
                };
                ordinal += 1;
                let permitted = self
                    .exec
                    .registry
                    .check_allowlist(&node.agent_id, &tc.name)
                    .map(|d| d.permitted)
                    .unwrap_or(false);
                let result = if permitted {
                    self.dispatcher.dispatch(&call).await
                } else {
                    self.dispatcher.deny(&call)
                }
                .map_err(|e| e.to_string())?;
                self.exec.emit(
                    EventKind::ToolCall,
                    json!({
                        "node_id": node.node_id,
                        "tool": tc.name,
                        "ordinal": call.ordinal,
                        "outcome": result.outcome,
                        "elapsed_ms": result.elapsed_ms,
                    }),
                );
                if result.outcome == ToolOutcome::Ok {
                    ok_calls += 1;
                } else if first_error.is_none() {
                    first_error = Some(error_message(&result.body));
                }
                if let Some(img) = &result.image {
                    images.push(img.clone());
                }
                messages.push(Message::tool(tc.id, result.body));
            }
        }

        let mut text = match final_text {
            Some(t) => t,
            None => {
                let notice = format!(
                    "[truncated: tool-calling round cap of {} reached before a final answer]",
                    self.exec.config.round_cap
                );
                if last_text.is_empty() { notice } else { format!("{last_text}\n\n{notice}") }
            }
        };
        if ordinal > 0 && ok_calls == 0 {
            let reason = first_error.unwrap_or_else(|| "no tool call succeeded".into());
            let stanza = format!("DATA UNAVAILABLE: {}: {}", node.agent_id, reason);
            text = if text.trim().is_empty() { stanza } else { format!("{stanza}\n\n{text}") };
        }
        Ok(NodeOutput {
            brief: Brief {
                text,
                producer_node: node.node_id.clone(),
                kind: NodeKind::Specialist,
                source_briefs: Vec::new(),
                usage,
                error: None,
            },
            images,
        })
    }
}

struct LayerOutput {
    text: String,
    producer: String,
    replaces_context: bool,
}
