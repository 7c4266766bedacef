//! Plan-then-execute glue shared by the runners, the gateway and the CLI.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::architect::{Architect, ArchitectError, ProposedPlan};
use crate::executor::{AblationVariant, ExecConfig, Executor, Observer, RunResult};
use crate::features::PatternTable;
use crate::leg::{static_leg, static_plan, CompileError, Leg};
use crate::llm::{ChatBackend, Stage, Usage, UsageLedger};
use crate::plan::PlanSpec;
use crate::provenance::Ledger;
use crate::registry::Registry;
use crate::tools::{FaultPlan, ToolBackend};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("architect: {0}")]
    Architect(#[from] ArchitectError),
    #[error("static graph: {0}")]
    Static(#[from] CompileError),
}

impl PipelineError {
    pub fn usage(&self) -> Usage {
        match self {
            PipelineError::Architect(e) => e.usage(),
            PipelineError::Static(_) => Usage::default(),
        }
    }
}

/// A plan ready for execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planned {
    pub plan: PlanSpec,
    pub leg: Leg,
    /// Absent when the static graph replaced the architect.
    pub proposed: Option<ProposedPlan>,
}

impl Planned {
    pub fn architect_usage(&self) -> Usage {
        self.proposed.as_ref().map(|p| p.usage).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub planned: Planned,
    pub result: RunResult,
    /// Executor usage plus the architect's.
    pub usage: UsageLedger,
}

pub struct Pipeline {
    registry: Arc<Registry>,
    model: Arc<dyn ChatBackend>,
    tools: Arc<dyn ToolBackend>,
    ledger: Arc<Ledger>,
    exec: ExecConfig,
    patterns: PatternTable,
    heuristics_text: Option<String>,
    revision_cap: Option<usize>,
    observer: Option<Arc<dyn Observer>>,
}

impl Pipeline {
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
            exec: ExecConfig::default(),
            patterns: PatternTable::default(),
            heuristics_text: None,
            revision_cap: None,
            observer: None,
        }
    }

    pub fn with_exec_config(mut self, exec: ExecConfig) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_patterns(mut self, patterns: PatternTable) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn with_heuristics_text(mut self, text: impl Into<String>) -> Self {
        self.heuristics_text = Some(text.into());
        self
    }

    pub fn with_revision_cap(mut self, cap: usize) -> Self {
        self.revision_cap = Some(cap);
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn Observer>) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn architect(&self) -> Architect {
        let mut a = Architect::new(self.registry.clone(), self.model.clone()).with_patterns(self.patterns.clone());
        if let Some(text) = &self.heuristics_text {
            a = a.with_heuristics_text(text.clone());
        }
        if let Some(cap) = self.revision_cap {
            a = a.with_revision_cap(cap);
        }
        a
    }

    pub fn executor(&self) -> Executor {
        let e = Executor::new(self.registry.clone(), self.model.clone(), self.tools.clone(), self.ledger.clone())
            .with_config(self.exec.clone());
        match &self.observer {
            Some(o) => e.with_observer(o.clone()),
            None => e,
        }
    }

    /// Proposes a plan, or compiles the static graph for the fixed-graph variant.
    pub async fn plan(&self, query: &str, variant: AblationVariant) -> Result<Planned, PipelineError> {
        if variant == AblationVariant::FixedGraph {
            return Ok(Planned {
                plan: static_plan(query),
                leg: static_leg(&self.registry, query)?,
                proposed: None,
            });
        }
        let proposed = self.architect().propose(query).await?;
        Ok(Planned {
            plan: proposed.plan.clone(),
            leg: proposed.leg.clone(),
            proposed: Some(proposed),
        })
    }

    pub async fn execute(&self, planned: Planned, query: &str, variant: AblationVariant, fault: Option<FaultPlan>) -> PipelineRun {
        let result = self.executor().execute(&planned.leg, query, variant, fault).await;
        let mut usage = result.usage_by_stage.clone();
        let arch = planned.architect_usage();
        if arch.total() > 0 {
            usage.accumulate(Stage::Architect, arch);
        }
        PipelineRun { planned, result, usage }
    }

    /// Plans and executes without a sign-off pause.
    pub async fn run(&self, query: &str, variant: AblationVariant, fault: Option<FaultPlan>) -> Result<PipelineRun, PipelineError> {
        let planned = self.plan(query, variant).await?;
        Ok(self.execute(planned, query, variant, fault).await)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::plan::Topology;
    use crate::tools::ToolResult;
    use async_trait::async_trait;
    use serde_json::json;

    struct NoTools;

    #[async_trait]
    impl ToolBackend for NoTools {
        async fn call(&self, _call: &crate::tools::ToolCall) -> ToolResult {
            ToolResult::ok("{}")
        }
    }

    fn reply(stage: &str, node: &str, content: &str, i: u64, o: u64) -> serde_json::Value {
        json!({"match": {"stage": stage, "node": node}, "respond": {"content": content, "usage": {"input_tokens": i, "output_tokens": o}}})
    }

    fn pipeline(exchanges: Vec<serde_json::Value>) -> Pipeline {
        let backend = ScriptedBackend::from_json(&json!({"exchanges": exchanges}).to_string()).unwrap();
        Pipeline::new(Arc::new(Registry::builtin()), Arc::new(backend), Arc::new(NoTools), Arc::new(Ledger::in_memory()))
    }

    #[tokio::test]
    async fn architect_usage_is_folded_into_the_stage_ledger() {
        let plan = r#"{"topology":"linear","tracks":[{"goal":"zones","layers":[["fema"]]}]}"#;
        let p = pipeline(vec![
            reply("architect", "graph_architect", plan, 3000, 200),
            reply("specialist", "t0.l0.fema", "Zone AE per FEMA NFHL", 5000, 100),
            reply("reporter", "t*.l1.reporter", "Miami Beach: Zone AE (FEMA NFHL).", 1200, 300),
        ]);
        let run = p.run("What are the FEMA flood zones for Miami Beach, Florida?", AblationVariant::Full, None).await.unwrap();
        assert_eq!(run.planned.plan.topology, Topology::Linear);
        assert_eq!(run.usage.stage(Stage::Architect), Usage::new(3000, 200));
        assert_eq!(run.usage.total(), Usage::new(9200, 600));
        assert_eq!(run.result.final_text, "Miami Beach: Zone AE (FEMA NFHL).");
    }

    #[tokio::test]
    async fn fixed_graph_skips_the_architect() {
        let p = pipeline(Vec::new());
        let planned = p.plan("anything", AblationVariant::FixedGraph).await.unwrap();
        assert!(planned.proposed.is_none());
        assert_eq!(planned.leg.specialists().len(), 4);
    }

    #[tokio::test]
    async fn architect_failure_reports_spent_tokens() {
        let p = pipeline(vec![
            json!({"match": {"stage": "architect", "ordinal": 0}, "respond": {"content": "no", "usage": {"input_tokens": 10, "output_tokens": 1}}}),
            json!({"match": {"stage": "architect", "ordinal": 1}, "respond": {"content": "still no", "usage": {"input_tokens": 10, "output_tokens": 1}}}),
        ]);
        let err = p.run("q", AblationVariant::Full, None).await.unwrap_err();
        assert_eq!(err.usage(), Usage::new(20, 2));
    }
}
