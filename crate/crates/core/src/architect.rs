//! Plan proposal and revision through the backbone model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data;
use crate::features::{PatternTable, QueryFeatures};
use crate::leg::{compile_leg, CompileError, Leg};
use crate::llm::{ChatBackend, ChatRequest, LlmError, Message, Stage, Usage};
use crate::plan::{parse_plan, validate_plan, PlanSpec};
use crate::prompts;
use crate::registry::{Registry, Role, SpecialistCatalog};
use crate::rewrite::{Heuristic, HeuristicIds, RewriteError, RewriteNote, Rewriter};

pub const DEFAULT_REVISION_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectRequest {
    pub query_text: String,
    pub catalog: SpecialistCatalog,
    pub heuristics_text: String,
    #[serde(default)]
    pub revision_feedback: Option<String>,
    #[serde(default)]
    pub prior_plan: Option<PlanSpec>,
}

impl ArchitectRequest {
    pub fn new(query_text: impl Into<String>, registry: &Registry, heuristics_text: impl Into<String>) -> Self {
        Self {
            query_text: query_text.into(),
            catalog: registry.catalog_for_architect(),
            heuristics_text: heuristics_text.into(),
            revision_feedback: None,
            prior_plan: None,
        }
    }

    pub fn revision(mut self, prior_plan: PlanSpec, feedback: impl Into<String>) -> Self {
        self.prior_plan = Some(prior_plan);
        self.revision_feedback = Some(feedback.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedPlan {
    /// The plan after the deterministic rewrite.
    pub plan: PlanSpec,
    /// The plan as the model wrote it.
    pub model_plan: PlanSpec,
    pub leg: Leg,
    pub raw_model_output: String,
    pub rewrite_log: Vec<RewriteNote>,
    pub features: QueryFeatures,
    pub usage: Usage,
    /// Model calls spent, reprompts included.
    pub attempts: usize,
    pub revision_count: usize,
}

impl ProposedPlan {
    pub fn applied_heuristics(&self) -> Vec<Heuristic> {
        let mut out: Vec<Heuristic> = Vec::new();
        for n in self.rewrite_log.iter().filter(|n| n.applied) {
            if !out.contains(&n.heuristic) {
                out.push(n.heuristic);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchitectError {
    #[error("specialist catalog is empty")]
    EmptyCatalog,
    #[error("architect failed twice: {error}")]
    Failure {
        first_output: String,
        second_output: String,
        error: String,
        usage: Usage,
    },
    #[error("empty revision")]
    EmptyRevision,
    #[error("revision requested without a prior plan")]
    MissingPriorPlan,
    #[error("revision cap of {0} reached")]
    RevisionCap(usize),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error("compile: {0}")]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Model(#[from] LlmError),
}

impl ArchitectError {
    /// Tokens spent before the failure.
    pub fn usage(&self) -> Usage {
        match self {
            ArchitectError::Failure { usage, .. } => *usage,
            _ => Usage::default(),
        }
    }
}

pub struct Architect {
    registry: Arc<Registry>,
    model: Arc<dyn ChatBackend>,
    patterns: PatternTable,
    ids: HeuristicIds,
    heuristics_text: String,
    rewrite: bool,
    revision_cap: usize,
}

impl Architect {
    pub fn new(registry: Arc<Registry>, model: Arc<dyn ChatBackend>) -> Self {
        Self {
            registry,
            model,
            patterns: PatternTable::default(),
            ids: HeuristicIds::default(),
            heuristics_text: data::DEFAULT_HEURISTICS.to_string(),
            rewrite: true,
            revision_cap: DEFAULT_REVISION_CAP,
        }
    }

    pub fn with_patterns(mut self, patterns: PatternTable) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn with_heuristic_ids(mut self, ids: HeuristicIds) -> Self {
        self.ids = ids;
        self
    }

    pub fn with_heuristics_text(mut self, text: impl Into<String>) -> Self {
        self.heuristics_text = text.into();
        self
    }

    /// Turns the deterministic rewrite on or off.
    pub fn with_rewrite(mut self, enabled: bool) -> Self {
        self.rewrite = enabled;
        self
    }

    pub fn with_revision_cap(mut self, cap: usize) -> Self {
        self.revision_cap = cap;
        self
    }

    pub fn revision_cap(&self) -> usize {
        self.revision_cap
    }

    pub fn request(&self, query: &str) -> ArchitectRequest {
        ArchitectRequest::new(query, &self.registry, self.heuristics_text.clone())
    }

    pub async fn propose(&self, query: &str) -> Result<ProposedPlan, ArchitectError> {
        self.propose_plan(&self.request(query)).await
    }

    /// Revises `prior` with user feedback; the revision count carries over.
    pub async fn revise(&self, query: &str, prior: &ProposedPlan, feedback: &str) -> Result<ProposedPlan, ArchitectError> {
        if feedback.trim().is_empty() {
            return Err(ArchitectError::EmptyRevision);
        }
        if prior.revision_count >= self.revision_cap {
            return Err(ArchitectError::RevisionCap(self.revision_cap));
        }
        let req = self.request(query).revision(prior.plan.clone(), feedback);
        let mut out = self.propose_plan(&req).await?;
        out.revision_count = prior.revision_count + 1;
        Ok(out)
    }

    pub async fn propose_plan(&self, req: &ArchitectRequest) -> Result<ProposedPlan, ArchitectError> {
        if req.catalog.is_empty() {
            return Err(ArchitectError::EmptyCatalog);
        }
        let mut messages = vec![Message::user(req.query_text.clone())];
        match (&req.revision_feedback, &req.prior_plan) {
            (Some(f), _) if f.trim().is_empty() => return Err(ArchitectError::EmptyRevision),
            (Some(_), None) => return Err(ArchitectError::MissingPriorPlan),
            (Some(f), Some(p)) => messages.push(Message::user(prompts::render(
                prompts::ARCHITECT_REVISE,
                &[("prior_plan", &p.to_json()), ("feedback", f)],
            ))),
            (None, _) => {}
        }
        let system_prompt = self
            .registry
            .agent(self.registry.role(Role::Architect))
            .map(|a| a.system_prompt.clone())
            .unwrap_or_default();
        let system = prompts::render(
            prompts::ARCHITECT,
            &[
                ("system_prompt", &system_prompt),
                ("catalog", &req.catalog.to_prompt_json()),
                ("heuristics", &req.heuristics_text),
            ],
        );
        let node = self.registry.role(Role::Architect).to_string();

        let mut usage = Usage::default();
        let mut first: Option<(String, String)> = None;
        for attempt in 1..=2 {
            let chat = ChatRequest::new(Stage::Architect, system.clone(), messages.clone()).with_node(&node, &node);
            let resp = self.model.chat(&chat).await?;
            usage += resp.usage;
            match self.accept(&resp.content) {
                Ok(model_plan) => return self.finish(req, model_plan, resp.content, usage, attempt),
                Err(error) => match first.take() {
                    None => {
                        messages.push(Message::assistant(resp.content.clone(), Vec::new()));
                        messages.push(Message::user(prompts::render(prompts::ARCHITECT_RETRY, &[("error", &error)])));
                        first = Some((resp.content, error));
                    }
                    Some((first_output, _)) => {
                        return Err(ArchitectError::Failure {
                            first_output,
                            second_output: resp.content,
                            error,
                            usage,
                        })
                    }
                },
            }
        }
        unreachable!("the second attempt either succeeds or fails")
    }

    /// Parses and validates one model reply.
    fn accept(&self, text: &str) -> Result<PlanSpec, String> {
        let plan = parse_plan(text).map_err(|e| e.to_string())?;
        let violations = validate_plan(&plan, &self.registry);
        if violations.is_empty() {
            Ok(plan)
        } else {
            Err(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))
        }
    }

    fn finish(
        &self,
        req: &ArchitectRequest,
        model_plan: PlanSpec,
        raw: String,
        usage: Usage,
        attempts: usize,
    ) -> Result<ProposedPlan, ArchitectError> {
        let features = self.patterns.extract(&req.query_text);
        let (plan, rewrite_log) = if self.rewrite {
            let out = Rewriter::with_ids(&self.registry, self.ids.clone()).rewrite(&model_plan, &features)?;
            (out.plan, out.log)
        } else {
            (model_plan.clone(), Vec::new())
        };
        let leg = compile_leg(&plan, &self.registry)?;
        Ok(ProposedPlan {
            plan,
            model_plan,
            leg,
            raw_model_output: raw,
            rewrite_log,
            features,
            usage,
            attempts,
            revision_count: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::plan::Topology;
    use serde_json::json;

    fn architect(replies: &[&str]) -> Architect {
        let exchanges: Vec<_> = replies
            .iter()
            .enumerate()
            .map(|(i, r)| json!({"match": {"stage": "architect", "ordinal": i}, "respond": {"content": r, "usage": {"input_tokens": 1000, "output_tokens": 100}}}))
            .collect();
        let backend = ScriptedBackend::from_json(&json!({"exchanges": exchanges}).to_string()).unwrap();
        Architect::new(Arc::new(Registry::builtin()), Arc::new(backend))
    }

    const LINEAR: &str = r#"{"topology":"linear","tracks":[{"goal":"monthly maxima","layers":[["noaa_coops"]]}]}"#;

    #[tokio::test]
    async fn linear_plan_is_accepted() {
        let a = architect(&[LINEAR]);
        let p = a.propose("What were the monthly maximum water levels at San Francisco in 2023?").await.unwrap();
        assert_eq!(p.plan.topology, Topology::Linear);
        assert_eq!(p.leg.node_count(), 2);
        assert_eq!(p.usage, Usage::new(1000, 100));
        assert_eq!(p.attempts, 1);
    }

    #[tokio::test]
    async fn four_tracks_keep_distinct_nhc_nodes() {
        let plan = json!({"topology": "parallel_tracks", "tracks": [
            {"goal": "Ian surge", "layers": [["nhc"], ["noaa_coops"]]},
            {"goal": "Ian track", "layers": [["nhc"]]},
            {"goal": "flood zone", "layers": [["fema"]]},
            {"goal": "forecast", "layers": [["stofs"]]}
        ]});
        let a = architect(&[&plan.to_string()]);
        let p = a.propose("four questions").await.unwrap();
        assert_eq!(p.plan.tracks.len(), 4);
        let nhc: Vec<_> = p.leg.nodes().into_iter().filter(|n| n.agent_id == "nhc").map(|n| n.node_id.clone()).collect();
        assert_eq!(nhc, vec!["t0.l0.nhc", "t1.l0.nhc"]);
    }

    #[tokio::test]
    async fn garbage_twice_is_a_failure_with_both_outputs() {
        let a = architect(&["hello", "still not json"]);
        match a.propose("q").await {
            Err(ArchitectError::Failure { first_output, second_output, usage, .. }) => {
                assert_eq!(first_output, "hello");
                assert_eq!(second_output, "still not json");
                assert_eq!(usage, Usage::new(2000, 200));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[tokio::test]
    async fn reprompt_recovers_and_accumulates_usage() {
        let bad = r#"{"topology":"linear","tracks":[{"goal":"x","layers":[["graph_architect"]]}]}"#;
        let a = architect(&[bad, LINEAR]);
        let p = a.propose("q").await.unwrap();
        assert_eq!(p.attempts, 2);
        assert_eq!(p.usage, Usage::new(2000, 200));
        assert!(!p.plan.selected_agents().contains("graph_architect"));
    }

    #[tokio::test]
    async fn revisions_are_counted_and_capped() {
        let three = json!({"topology": "parallel_tracks", "tracks": [
            {"goal": "a", "layers": [["nhc"]]}, {"goal": "b", "layers": [["noaa_coops"]]}, {"goal": "c", "layers": [["fema"]]}
        ]});
        let two = json!({"topology": "parallel_tracks", "tracks": [
            {"goal": "a", "layers": [["nhc"]]}, {"goal": "b", "layers": [["noaa_coops"]]}
        ]});
        let a = architect(&[&three.to_string(), &two.to_string(), &two.to_string()]).with_revision_cap(2);
        let p0 = a.propose("q").await.unwrap();
        assert!(matches!(a.revise("q", &p0, "  ").await, Err(ArchitectError::EmptyRevision)));
        let p1 = a.revise("q", &p0, "drop FEMA track").await.unwrap();
        assert_eq!((p1.plan.tracks.len(), p1.revision_count), (2, 1));
        let p2 = a.revise("q", &p1, "keep it").await.unwrap();
        assert_eq!(p2.plan, p1.plan);
        assert_eq!(p2.revision_count, 2);
        assert!(matches!(a.revise("q", &p2, "again").await, Err(ArchitectError::RevisionCap(2))));
    }

    #[tokio::test]
    async fn rewrite_is_applied_to_the_model_plan() {
        let a = architect(&[r#"{"topology":"linear","tracks":[{"goal":"g","layers":[["noaa_coops"]]}]}"#]);
        let p = a
            .propose("What was the observed storm surge in Fort Myers during the Hurricane Ian event?")
            .await
            .unwrap();
        let layers: Vec<Vec<String>> = p.plan.tracks[0].layers.iter().map(|l| l.agent_ids.clone()).collect();
        assert_eq!(layers, vec![vec!["nhc".to_string()], vec!["noaa_coops".into(), "usgs".into()]]);
        assert_eq!(p.applied_heuristics(), vec![Heuristic::StormTrackFirst, Heuristic::ComplementaryHwm]);
    }
}
