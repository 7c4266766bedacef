//! Token and API cost accounting.

use serde::{Deserialize, Serialize};

use crate::llm::{Stage, Usage, UsageLedger};

/// Currency per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub input_rate: f64,
    pub output_rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { input_rate: 3.0, output_rate: 15.0 }
    }
}

impl CostModel {
    pub fn new(input_rate: f64, output_rate: f64) -> Result<Self, String> {
        if !(input_rate >= 0.0 && output_rate >= 0.0) {
            return Err(format!("rates must be non-negative, got {input_rate} / {output_rate}"));
        }
        Ok(Self { input_rate, output_rate })
    }

    pub fn cost(&self, usage: Usage) -> f64 {
        usage.input_tokens as f64 * self.input_rate / 1e6 + usage.output_tokens as f64 * self.output_rate / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: Stage,
    pub usage: Usage,
    pub cost: f64,
    /// Share of all tokens, in percent.
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTally {
    pub model: CostModel,
    pub stages: Vec<StageCost>,
    pub total_usage: Usage,
    pub total_cost: f64,
    pub queries: usize,
    pub per_query_cost: f64,
    pub per_query_tokens: f64,
}

pub fn tally_cost(usage_by_stage: &UsageLedger, model: &CostModel, queries: usize) -> CostTally {
    let stages = Stage::ALL
        .iter()
        .map(|&stage| {
            let usage = usage_by_stage.stage(stage);
            StageCost { stage, usage, cost: model.cost(usage), share_pct: usage_by_stage.share(stage) * 100.0 }
        })
        .collect();
    let total_usage = usage_by_stage.total();
    let total_cost = model.cost(total_usage);
    let n = queries.max(1) as f64;
    CostTally {
        model: *model,
        stages,
        total_usage,
        total_cost,
        queries,
        per_query_cost: if queries == 0 { 0.0 } else { total_cost / n },
        per_query_tokens: if queries == 0 { 0.0 } else { total_usage.total() as f64 / n },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn published_stages() -> UsageLedger {
        let mut l = UsageLedger::default();
        l.accumulate(Stage::Architect, Usage::new(21_533, 1_572));
        l.accumulate(Stage::Specialist, Usage::new(468_643, 17_515));
        l.accumulate(Stage::Consolidator, Usage::new(4_697, 1_869));
        l.accumulate(Stage::Reporter, Usage::new(9_227, 2_438));
        l
    }

    #[test]
    fn published_stage_totals_reproduce_the_budget() {
        let t = tally_cost(&published_stages(), &CostModel::default(), 7);
        assert_eq!(t.total_usage, Usage::new(504_100, 23_394));
        assert!((t.total_cost - 1.86321).abs() < 1e-9);
        assert!((t.per_query_cost - 0.266173).abs() < 1e-6);
        assert!((t.per_query_tokens - 75_356.2857).abs() < 1e-3);
        let spec = t.stages.iter().find(|s| s.stage == Stage::Specialist).unwrap();
        assert!((spec.share_pct - 92.2).abs() < 0.05, "{}", spec.share_pct);
    }

    #[test]
    fn zero_usage_costs_nothing_and_rates_are_checked() {
        let t = tally_cost(&UsageLedger::default(), &CostModel::default(), 0);
        assert_eq!((t.total_cost, t.per_query_cost), (0.0, 0.0));
        assert!(CostModel::new(-1.0, 1.0).is_err());
    }
}
