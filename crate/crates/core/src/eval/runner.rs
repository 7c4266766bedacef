//! Benchmark, ablation, stress and topology-harness runners.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use futures::stream::{self, StreamExt};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::corpus::{Category, Corpus, CorpusEntry, StressSuite};
use super::cost::{tally_cost, CostModel, CostTally};
use super::metrics::{
    factual_precision, population_std, score_agent_f1, score_source_attribution, score_topology, AttributionDetail,
    MetricScores,
};
use super::EvalError;
use crate::architect::Architect;
use crate::executor::{AblationVariant, ExecConfig};
use crate::features::PatternTable;
use crate::llm::{ChatBackend, ScriptedBackend, UsageLedger};
use crate::pipeline::{Pipeline, PipelineRun};
use crate::plan::{PlanSpec, Topology};
use crate::provenance::{Ledger, LedgerFilter};
use crate::registry::Registry;
use crate::tools::{FaultPlan, FixtureBackend, ToolBackend};

enum Backends {
    /// Per-query scenario scripts replayed over recorded fixtures.
    Scripted,
    Live { model: Arc<dyn ChatBackend>, tools: Arc<dyn ToolBackend> },
}

/// Everything a runner needs to execute queries.
pub struct Harness {
    registry: Arc<Registry>,
    ledger: Arc<Ledger>,
    exec: ExecConfig,
    patterns: PatternTable,
    cost: CostModel,
    concurrency: usize,
    backends: Backends,
    fixtures: Mutex<HashMap<PathBuf, Arc<FixtureBackend>>>,
}

/// One query to run.
#[derive(Debug, Clone)]
pub struct Case<'a> {
    pub id: String,
    pub query: String,
    pub script: PathBuf,
    pub fixtures: PathBuf,
    pub variant: AblationVariant,
    pub fault: Option<FaultPlan>,
    pub entry: Option<&'a CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub query: String,
    pub variant: AblationVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<MetricScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<AttributionDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSpec>,
    pub selected_agents: BTreeSet<String>,
    pub final_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: UsageLedger,
    pub dispatches: usize,
    pub ledger_tool_records: usize,
    pub node_count: usize,
    pub trace_id: String,
    pub latency_s: f64,
}

impl QueryOutcome {
    pub fn topology(&self) -> Option<Topology> {
        self.plan.as_ref().map(|p| p.topology)
    }

    fn failed(case: &Case<'_>, error: String, latency_s: f64) -> Self {
        let scores = case.entry.map(|_| MetricScores::new(0.0, 0.0, 0.0, 0.0, latency_s));
        Self {
            id: case.id.clone(),
            category: case.entry.map(|e| e.category),
            query: case.query.clone(),
            variant: case.variant,
            scores,
            attribution: None,
            plan: None,
            selected_agents: BTreeSet::new(),
            final_text: String::new(),
            error: Some(error),
            usage: UsageLedger::default(),
            dispatches: 0,
            ledger_tool_records: 0,
            node_count: 0,
            trace_id: String::new(),
            latency_s,
        }
    }
}

impl Harness {
    /// Scripted backends: each case names its script and fixture directory.
    pub fn scripted(registry: Arc<Registry>) -> Self {
        Self::with_backends(registry, Backends::Scripted)
    }

    /// One shared model and tool backend for every case.
    pub fn live(registry: Arc<Registry>, model: Arc<dyn ChatBackend>, tools: Arc<dyn ToolBackend>) -> Self {
        Self::with_backends(registry, Backends::Live { model, tools })
    }

    fn with_backends(registry: Arc<Registry>, backends: Backends) -> Self {
        Self {
            registry,
            ledger: Arc::new(Ledger::in_memory()),
            exec: ExecConfig::default(),
            patterns: PatternTable::default(),
            cost: CostModel::default(),
            concurrency: 4,
            backends,
            fixtures: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_ledger(mut self, ledger: Arc<Ledger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn with_exec_config(mut self, exec: ExecConfig) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_patterns(mut self, patterns: PatternTable) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }

    /// Queries evaluated at once.
    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self.backends, Backends::Scripted)
    }

    fn fixture_backend(&self, dir: &Path) -> Result<Arc<FixtureBackend>, EvalError> {
        let mut cache = self.fixtures.lock().expect("fixture cache");
        if let Some(b) = cache.get(dir) {
            return Ok(b.clone());
        }
        let b = Arc::new(FixtureBackend::from_dir(dir).map_err(|e| EvalError::Fixture(e.to_string()))?);
        cache.insert(dir.to_path_buf(), b.clone());
        Ok(b)
    }

    fn backends_for(&self, case: &Case<'_>) -> Result<(Arc<dyn ChatBackend>, Arc<dyn ToolBackend>), EvalError> {
        match &self.backends {
            Backends::Live { model, tools } => Ok((model.clone(), tools.clone())),
            Backends::Scripted => {
                let model = ScriptedBackend::from_path(&case.script)
                    .map_err(|e| EvalError::Script(format!("{}: {e}", case.id)))?;
                let tools: Arc<dyn ToolBackend> = self.fixture_backend(&case.fixtures)?;
                Ok((Arc::new(model), tools))
            }
        }
    }

    pub fn pipeline_for(&self, case: &Case<'_>) -> Result<Pipeline, EvalError> {
        let (model, tools) = self.backends_for(case)?;
        Ok(Pipeline::new(self.registry.clone(), model, tools, self.ledger.clone())
            .with_exec_config(self.exec.clone())
            .with_patterns(self.patterns.clone()))
    }

    /// Script used for an entry under a variant. The fixed graph has its own
    /// scripts because its node ids differ from the planned graph's.
    pub fn script_for(corpus: &Corpus, entry: &CorpusEntry, variant: AblationVariant) -> PathBuf {
        let path = corpus.resolve(&entry.scenario_script);
        if variant != AblationVariant::FixedGraph {
            return path;
        }
        let file = path.file_name().map(|f| f.to_os_string()).unwrap_or_default();
        path.parent().unwrap_or(Path::new(".")).join("fixed_graph").join(file)
    }

    pub fn case<'a>(corpus: &Corpus, entry: &'a CorpusEntry, variant: AblationVariant) -> Case<'a> {
        Case {
            id: entry.id.clone(),
            query: entry.query.clone(),
            script: Self::script_for(corpus, entry, variant),
            fixtures: corpus.resolve(&entry.fixtures_ref),
            variant,
            fault: None,
            entry: Some(entry),
        }
    }

    /// Runs one case; failures become outcomes with an error, never panics.
    pub async fn run_case(&self, case: &Case<'_>) -> QueryOutcome {
        let clock = Instant::now();
        let pipeline = match self.pipeline_for(case) {
            Ok(p) => p,
            Err(e) => return QueryOutcome::failed(case, e.to_string(), clock.elapsed().as_secs_f64()),
        };
        let query = case.query.clone();
        let variant = case.variant;
        let fault = case.fault.clone();
        // A panic inside the run surfaces as a join error rather than unwinding the runner.
        let joined = tokio::spawn(async move { pipeline.run(&query, variant, fault).await }).await;
        let latency_s = clock.elapsed().as_secs_f64();
        let run = match joined {
            Ok(Ok(run)) => run,
            Ok(Err(e)) => return QueryOutcome::failed(case, e.to_string(), latency_s),
            Err(e) => return QueryOutcome::failed(case, format!("run aborted: {e}"), latency_s),
        };
        self.outcome(case, run, latency_s)
    }

    fn outcome(&self, case: &Case<'_>, run: PipelineRun, latency_s: f64) -> QueryOutcome {
        let selected_agents = run.planned.leg.specialists();
        let pipeline_text = run.result.pipeline_text();
        let (scores, attribution) = match case.entry {
            Some(entry) => {
                let attribution = score_source_attribution(&[&pipeline_text], &entry.rubric).ok();
                let scores = MetricScores::new(
                    factual_precision(&run.result.final_text, &entry.ground_truth),
                    score_topology(run.planned.plan.topology, entry.expected_topology),
                    score_agent_f1(&selected_agents, &entry.expected_agents).unwrap_or(0.0),
                    attribution.as_ref().map(|a| a.score).unwrap_or(0.0),
                    latency_s,
                );
                (Some(scores), attribution)
            }
            None => (None, None),
        };
        let ledger_tool_records = self
            .ledger
            .query(&run.result.trace_id, &LedgerFilter::default())
            .map(|r| r.len())
            .unwrap_or(0);
        QueryOutcome {
            id: case.id.clone(),
            category: case.entry.map(|e| e.category),
            query: case.query.clone(),
            variant: case.variant,
            scores,
            attribution,
            plan: Some(run.planned.plan.clone()),
            selected_agents,
            final_text: run.result.final_text.clone(),
            error: run.result.failed.clone(),
            usage: run.usage.clone(),
            dispatches: run.result.dispatches,
            ledger_tool_records,
            node_count: run.planned.leg.node_count(),
            trace_id: run.result.trace_id.0.clone(),
            latency_s,
        }
    }

    async fn run_cases(&self, cases: Vec<Case<'_>>) -> Vec<QueryOutcome> {
        let mut indexed: Vec<(usize, QueryOutcome)> = stream::iter(cases.iter().enumerate())
            .map(|(i, c)| async move { (i, self.run_case(c).await) })
            .buffer_unordered(self.concurrency)
            .collect()
            .await;
        indexed.sort_by_key(|(i, _)| *i);
        indexed.into_iter().map(|(_, o)| o).collect()
    }

    pub async fn run_benchmark(&self, corpus: &Corpus, variant: AblationVariant) -> BenchmarkReport {
        let clock = Instant::now();
        let cases = corpus.entries.iter().map(|e| Self::case(corpus, e, variant)).collect();
        let queries = self.run_cases(cases).await;
        BenchmarkReport::assemble(variant, queries, &self.cost, clock.elapsed().as_secs_f64())
    }

    /// Baseline plus each variant over the same entries.
    pub async fn run_ablation(&self, corpus: &Corpus, variants: &[AblationVariant]) -> AblationReport {
        let baseline = self.run_benchmark(corpus, AblationVariant::Full).await;
        let mut rows = Vec::new();
        for &v in variants.iter().filter(|v| **v != AblationVariant::Full) {
            let report = self.run_benchmark(corpus, v).await;
            rows.push(AblationRow::new(&baseline.summary, report));
        }
        AblationReport { baseline, variants: rows }
    }

    pub async fn run_stress(&self, kind: StressKind, corpus: &Corpus, suite: &StressSuite) -> StressReport {
        match kind {
            StressKind::Scaling => StressReport::Scaling(self.stress_scaling(corpus, suite).await),
            StressKind::Paraphrase => StressReport::Paraphrase(self.stress_paraphrase(corpus, suite).await),
            StressKind::Adversarial => StressReport::Adversarial(self.stress_adversarial(corpus, suite).await),
            StressKind::Fault => StressReport::Fault(self.stress_fault(corpus, suite).await),
        }
    }

    async fn stress_scaling(&self, corpus: &Corpus, suite: &StressSuite) -> ScalingReport {
        let extra = Corpus { entries: suite.scaling.clone(), base_dir: corpus.base_dir.clone() };
        let mut cases: Vec<Case<'_>> = corpus.entries.iter().map(|e| Self::case(corpus, e, AblationVariant::Full)).collect();
        cases.extend(extra.entries.iter().map(|e| Self::case(&extra, e, AblationVariant::Full)));
        let sub: Vec<usize> = corpus.entries.iter().chain(&extra.entries).map(|e| e.sub_questions).collect();
        let outcomes = self.run_cases(cases).await;
        let mut groups: BTreeMap<usize, Vec<&QueryOutcome>> = BTreeMap::new();
        for (o, n) in outcomes.iter().zip(sub) {
            groups.entry(n).or_default().push(o);
        }
        let rows = groups
            .into_iter()
            .map(|(n, os)| ScalingRow {
                sub_questions: n,
                n: os.len(),
                accuracy_pct: mean(os.iter().map(|o| o.scores.as_ref().map_or(0.0, |s| s.overall))) * 100.0,
                latency_s: mean(os.iter().map(|o| o.latency_s)),
                errors: os.iter().filter(|o| o.error.is_some()).count(),
            })
            .collect();
        ScalingReport { rows, queries: outcomes }
    }

    async fn stress_paraphrase(&self, corpus: &Corpus, suite: &StressSuite) -> ParaphraseReport {
        let mut groups = Vec::new();
        for g in &suite.paraphrase {
            let Some(entry) = corpus.get(&g.group) else {
                groups.push(ParaphraseRow::missing(&g.group, &g.label));
                continue;
            };
            let cases: Vec<Case<'_>> = g
                .variants
                .iter()
                .map(|v| Case {
                    id: format!("{}{}", g.group, v.variant),
                    query: v.query.clone(),
                    script: corpus.resolve(&v.scenario_script),
                    fixtures: corpus.resolve(&entry.fixtures_ref),
                    variant: AblationVariant::Full,
                    fault: None,
                    entry: Some(entry),
                })
                .collect();
            let outcomes = self.run_cases(cases).await;
            let topologies: BTreeSet<String> =
                outcomes.iter().map(|o| o.topology().map_or("none".to_string(), |t| t.to_string())).collect();
            let agent_sets: BTreeSet<Vec<String>> =
                outcomes.iter().map(|o| o.selected_agents.iter().cloned().collect()).collect();
            let factual: Vec<f64> = outcomes.iter().map(|o| o.scores.as_ref().map_or(0.0, |s| s.factual_precision)).collect();
            groups.push(ParaphraseRow {
                group: g.group.clone(),
                label: g.label.clone(),
                topology_agree: topologies.len() == 1 && outcomes.iter().all(|o| o.error.is_none()),
                agents_agree: agent_sets.len() == 1,
                score_sigma_pct: population_std(&factual) * 100.0,
                factual_pct: factual.iter().map(|f| f * 100.0).collect(),
                variants: outcomes,
            });
        }
        let sigma = mean(groups.iter().map(|g| g.score_sigma_pct));
        ParaphraseReport {
            topology_agree: groups.iter().filter(|g| g.topology_agree).count(),
            agents_agree: groups.iter().filter(|g| g.agents_agree).count(),
            total: groups.len(),
            mean_sigma_pct: sigma,
            groups,
        }
    }

    async fn stress_adversarial(&self, corpus: &Corpus, suite: &StressSuite) -> AdversarialReport {
        let cases: Vec<Case<'_>> = suite
            .adversarial
            .iter()
            .map(|a| Case {
                id: a.id.clone(),
                query: a.query.clone(),
                script: corpus.resolve(&a.scenario_script),
                fixtures: corpus.resolve("fixtures"),
                variant: AblationVariant::Full,
                fault: None,
                entry: None,
            })
            .collect();
        let outcomes = self.run_cases(cases).await;
        let rows: Vec<AdversarialRow> = suite
            .adversarial
            .iter()
            .zip(outcomes)
            .map(|(a, o)| {
                let text = o.final_text.as_str();
                let hit = |p: &str| Regex::new(p).map(|r| r.is_match(text)).unwrap_or(false);
                AdversarialRow {
                    id: a.id.clone(),
                    adversarial_type: a.adversarial_type.clone(),
                    issue_detected: hit(&a.issue_pattern),
                    hallucination_free: !a.fabrication_patterns.iter().any(|p| hit(p)),
                    responsive: hit(&a.responsive_pattern),
                    no_crash: o.error.is_none(),
                    outcome: o,
                }
            })
            .collect();
        AdversarialReport {
            issue_detected: rows.iter().filter(|r| r.issue_detected).count(),
            hallucination_free: rows.iter().filter(|r| r.hallucination_free).count(),
            responsive: rows.iter().filter(|r| r.responsive).count(),
            total: rows.len(),
            rows,
        }
    }

    async fn stress_fault(&self, corpus: &Corpus, suite: &StressSuite) -> FaultReport {
        let f = &suite.fault;
        let cases: Vec<Case<'_>> = f
            .sources
            .iter()
            .map(|s| Case {
                id: format!("fault-{}", s.agent),
                query: f.query.clone(),
                script: corpus.resolve(&f.scenario_script),
                fixtures: corpus.resolve("fixtures"),
                variant: AblationVariant::Full,
                fault: Some(FaultPlan::outage(&s.agent)),
                entry: None,
            })
            .collect();
        let outcomes = self.run_cases(cases).await;
        let partial = Regex::new(&f.partial_pattern).ok();
        let rows: Vec<FaultRow> = f
            .sources
            .iter()
            .zip(outcomes)
            .map(|(s, o)| {
                let text = o.final_text.as_str();
                let notes = Regex::new(&s.limitation_pattern).map(|r| r.is_match(text)).unwrap_or(false);
                FaultRow {
                    agent: s.agent.clone(),
                    label: s.label.clone(),
                    partial_answer: !text.trim().is_empty() && partial.as_ref().is_none_or(|r| r.is_match(text)),
                    notes_limitation: notes,
                    no_crash: o.error.is_none(),
                    outcome: o,
                }
            })
            .collect();
        FaultReport {
            partial_answer: rows.iter().filter(|r| r.partial_answer).count(),
            notes_limitation: rows.iter().filter(|r| r.notes_limitation).count(),
            no_crash: rows.iter().filter(|r| r.no_crash).count(),
            total: rows.len(),
            rows,
        }
    }

    /// Architect-only pass: scores topology selection per entry. `overrides`
    /// maps entry ids to substitute scripts (relative to the corpus directory).
    pub async fn run_topology_harness(&self, corpus: &Corpus, overrides: &BTreeMap<String, String>) -> TopologyHarnessReport {
        let mut rows = Vec::new();
        for e in &corpus.entries {
            let script = match overrides.get(&e.id) {
                Some(p) => corpus.resolve(p),
                None => corpus.resolve(&e.scenario_script),
            };
            let model: Result<Arc<dyn ChatBackend>, String> = match &self.backends {
                Backends::Live { model, .. } => Ok(model.clone()),
                Backends::Scripted => ScriptedBackend::from_path(&script)
                    .map(|b| Arc::new(b) as Arc<dyn ChatBackend>)
                    .map_err(|e| e.to_string()),
            };
            let (selected, error) = match model {
                Ok(m) => match Architect::new(self.registry.clone(), m).with_patterns(self.patterns.clone()).propose(&e.query).await {
                    Ok(p) => (Some(p.plan.topology), None),
                    Err(err) => (None, Some(err.to_string())),
                },
                Err(err) => (None, Some(err)),
            };
            let correct = selected == Some(e.expected_topology);
            rows.push(TopologyRow {
                id: e.id.clone(),
                expected: e.expected_topology,
                selected,
                correct,
                injected: overrides.contains_key(&e.id),
                error,
            });
        }
        let correct = rows.iter().filter(|r| r.correct).count();
        TopologyHarnessReport {
            total: rows.len(),
            correct,
            score_pct: if rows.is_empty() { 0.0 } else { correct as f64 / rows.len() as f64 * 100.0 },
            failures: rows.iter().filter(|r| !r.correct).map(|r| r.id.clone()).collect(),
            rows,
        }
    }
}

/// Mean summed in sorted order, so the result does not depend on input order.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean metric values in percent over a group of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub column: String,
    pub n: usize,
    pub factual_precision: f64,
    pub topology_selection: f64,
    pub agent_f1: f64,
    pub source_attribution: f64,
    pub overall: f64,
    pub latency_s: f64,
}

impl MetricSummary {
    pub fn of<'a>(column: impl Into<String>, outcomes: impl IntoIterator<Item = &'a QueryOutcome>) -> Self {
        let scored: Vec<&MetricScores> = outcomes.into_iter().filter_map(|o| o.scores.as_ref()).collect();
        let pct = |f: fn(&MetricScores) -> f64| mean(scored.iter().map(|s| f(s))) * 100.0;
        Self {
            column: column.into(),
            n: scored.len(),
            factual_precision: pct(|s| s.factual_precision),
            topology_selection: pct(|s| s.topology_selection),
            agent_f1: pct(|s| s.agent_f1),
            source_attribution: pct(|s| s.source_attribution),
            overall: pct(|s| s.overall),
            latency_s: mean(scored.iter().map(|s| s.latency_s)),
        }
    }

    pub fn metrics(&self) -> [f64; 4] {
        [self.factual_precision, self.topology_selection, self.agent_f1, self.source_attribution]
    }
}

/// Per-category columns and the overall column.
pub fn category_report(outcomes: &[QueryOutcome]) -> Vec<MetricSummary> {
    let mut cols: Vec<MetricSummary> = Category::ALL
        .iter()
        .filter_map(|c| {
            let group: Vec<&QueryOutcome> = outcomes.iter().filter(|o| o.category == Some(*c)).collect();
            (!group.is_empty()).then(|| MetricSummary::of(c.label(), group))
        })
        .collect();
    cols.push(MetricSummary::of("Overall", outcomes));
    cols
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub variant: AblationVariant,
    pub columns: Vec<MetricSummary>,
    pub summary: MetricSummary,
    pub passed: usize,
    pub errors: usize,
    pub total: usize,
    pub usage: UsageLedger,
    pub cost: CostTally,
    pub wall_s: f64,
    pub queries: Vec<QueryOutcome>,
}

impl BenchmarkReport {
    pub fn assemble(variant: AblationVariant, queries: Vec<QueryOutcome>, cost: &CostModel, wall_s: f64) -> Self {
        let columns = category_report(&queries);
        let summary = columns.last().cloned().expect("overall column");
        let mut usage = UsageLedger::default();
        for q in &queries {
            usage.merge(&q.usage);
        }
        Self {
            variant,
            summary,
            passed: queries.iter().filter(|q| q.scores.as_ref().is_some_and(|s| s.passed())).count(),
            errors: queries.iter().filter(|q| q.error.is_some()).count(),
            total: queries.len(),
            cost: tally_cost(&usage, cost, queries.len()),
            usage,
            wall_s,
            columns,
            queries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub factual_precision: f64,
    pub topology_selection: f64,
    pub agent_f1: f64,
    pub source_attribution: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub summary: MetricSummary,
    pub delta: MetricDeltas,
    pub report: BenchmarkReport,
}

impl AblationRow {
    fn new(baseline: &MetricSummary, report: BenchmarkReport) -> Self {
        let s = report.summary.clone();
        Self {
            variant: report.variant,
            delta: MetricDeltas {
                factual_precision: s.factual_precision - baseline.factual_precision,
                topology_selection: s.topology_selection - baseline.topology_selection,
                agent_f1: s.agent_f1 - baseline.agent_f1,
                source_attribution: s.source_attribution - baseline.source_attribution,
                latency_s: s.latency_s - baseline.latency_s,
            },
            summary: s,
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub baseline: BenchmarkReport,
    pub variants: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: AblationVariant) -> Option<&AblationRow> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    Scaling,
    Paraphrase,
    Adversarial,
    Fault,
}

impl StressKind {
    pub const ALL: [StressKind; 4] = [StressKind::Scaling, StressKind::Paraphrase, StressKind::Adversarial, StressKind::Fault];

    pub fn as_str(&self) -> &'static str {
        match self {
            StressKind::Scaling => "scaling",
            StressKind::Paraphrase => "paraphrase",
            StressKind::Adversarial => "adversarial",
            StressKind::Fault => "fault",
        }
    }
}

impl std::str::FromStr for StressKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        StressKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown stress kind {s:?} (expected scaling, paraphrase, adversarial or fault)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub sub_questions: usize,
    pub n: usize,
    pub accuracy_pct: f64,
    pub latency_s: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub queries: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRow {
    pub group: String,
    pub label: String,
    pub topology_agree: bool,
    pub agents_agree: bool,
    pub score_sigma_pct: f64,
    pub factual_pct: Vec<f64>,
    pub variants: Vec<QueryOutcome>,
}

impl ParaphraseRow {
    fn missing(group: &str, label: &str) -> Self {
        Self {
            group: group.to_string(),
            label: label.to_string(),
            topology_agree: false,
            agents_agree: false,
            score_sigma_pct: 0.0,
            factual_pct: Vec::new(),
            variants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseReport {
    pub groups: Vec<ParaphraseRow>,
    pub topology_agree: usize,
    pub agents_agree: usize,
    pub total: usize,
    pub mean_sigma_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRow {
    pub id: String,
    pub adversarial_type: String,
    pub issue_detected: bool,
    pub hallucination_free: bool,
    pub responsive: bool,
    pub no_crash: bool,
    pub outcome: QueryOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub rows: Vec<AdversarialRow>,
    pub issue_detected: usize,
    pub hallucination_free: usize,
    pub responsive: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRow {
    pub agent: String,
    pub label: String,
    pub partial_answer: bool,
    pub notes_limitation: bool,
    pub no_crash: bool,
    pub outcome: QueryOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub rows: Vec<FaultRow>,
    pub partial_answer: usize,
    pub notes_limitation: usize,
    pub no_crash: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StressReport {
    Scaling(ScalingReport),
    Paraphrase(ParaphraseReport),
    Adversarial(AdversarialReport),
    Fault(FaultReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRow {
    pub id: String,
    pub expected: Topology,
    pub selected: Option<Topology>,
    pub correct: bool,
    pub injected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyHarnessReport {
    pub rows: Vec<TopologyRow>,
    pub total: usize,
    pub correct: usize,
    pub score_pct: f64,
    pub failures: Vec<String>,
}
