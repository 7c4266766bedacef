//! Published result tables shipped alongside the corpus, with arithmetic checks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cost::{tally_cost, CostModel, CostTally};
use super::metrics::overall;
use super::EvalError;
use crate::llm::{Stage, Usage, UsageLedger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub column: String,
    pub n: usize,
    pub factual_precision: f64,
    pub topology_selection: f64,
    pub agent_f1: f64,
    pub source_attribution: f64,
    pub overall: f64,
    #[serde(default)]
    pub latency_s: f64,
}

impl MetricColumn {
    pub fn metrics(&self) -> [f64; 4] {
        [self.factual_precision, self.topology_selection, self.agent_f1, self.source_attribution]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationColumn {
    pub variant: String,
    pub factual_precision: f64,
    pub topology_selection: f64,
    pub agent_f1: f64,
    pub source_attribution: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBudget {
    pub id: String,
    pub tokens: u64,
    pub cost: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub stage: Stage,
    pub input: u64,
    pub output: u64,
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedResults {
    pub benchmark: Vec<MetricColumn>,
    pub ablation: Vec<AblationColumn>,
    pub budget_by_query: Vec<QueryBudget>,
    pub budget_by_stage: Vec<StageBudget>,
    pub cost_model: CostModel,
    #[serde(default)]
    pub stress: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub column: String,
    pub mean_of_metrics: f64,
    pub reported_overall: f64,
    pub difference: f64,
    pub within_tolerance: bool,
}

/// Tolerance between the metric mean and the printed overall cell.
pub const CONSISTENCY_TOLERANCE: f64 = 0.05;

impl PublishedResults {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| EvalError::Corpus(format!("{}: {e}", path.display())))
    }

    pub fn builtin() -> Result<Self, EvalError> {
        Self::load(crate::data::default_data_dir().join("reference_results.json"))
    }

    /// Mean of the four metric rows against the overall row, per column.
    pub fn table1_consistency(&self) -> Vec<ConsistencyCheck> {
        self.benchmark
            .iter()
            .map(|c| {
                let mean = overall(c.metrics());
                let difference = (mean - c.overall).abs();
                ConsistencyCheck {
                    column: c.column.clone(),
                    mean_of_metrics: mean,
                    reported_overall: c.overall,
                    // Guard against representation error at the boundary.
                    within_tolerance: difference <= CONSISTENCY_TOLERANCE + 1e-9,
                    difference,
                }
            })
            .collect()
    }

    pub fn stage_ledger(&self) -> UsageLedger {
        let mut l = UsageLedger::default();
        for s in &self.budget_by_stage {
            l.accumulate(s.stage, Usage::new(s.input, s.output));
        }
        l
    }

    pub fn stage_cost(&self) -> CostTally {
        tally_cost(&self.stage_ledger(), &self.cost_model, self.budget_by_query.len())
    }

    pub fn per_query_token_total(&self) -> u64 {
        self.budget_by_query.iter().map(|q| q.tokens).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tables_are_internally_consistent() {
        let p = PublishedResults::builtin().unwrap();
        let checks = p.table1_consistency();
        assert_eq!(checks.len(), 7);
        assert!(checks.iter().all(|c| c.within_tolerance), "{checks:#?}");
        let nu = checks.iter().find(|c| c.column == "Linear NHC→N+U").unwrap();
        assert!((nu.mean_of_metrics - 85.05).abs() < 1e-9);
        assert_eq!(p.per_query_token_total(), p.stage_ledger().total().total());
        let t = p.stage_cost();
        assert!((t.total_cost - 1.86321).abs() < 1e-9);
    }
}
