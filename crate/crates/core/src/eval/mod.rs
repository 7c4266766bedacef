//! Scoring, corpus-driven runners, cost accounting and reports.

pub mod corpus;
pub mod cost;
pub mod metrics;
pub mod reference;
pub mod report;
pub mod runner;
pub mod scenario;

use thiserror::Error;

pub use corpus::{Category, Corpus, CorpusEntry, StressSuite, SUBSET7};
pub use cost::{tally_cost, CostModel, CostTally};
pub use metrics::{MetricScores, Reference, RubricComponent};
pub use reference::PublishedResults;
pub use scenario::{Scenario, ScenarioCatalog};
pub use runner::{
    AblationReport, BenchmarkReport, Harness, QueryOutcome, StressKind, StressReport, TopologyHarnessReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("unknown query id {0}")]
    UnknownQuery(String),
    #[error("scenario script: {0}")]
    Script(String),
    #[error("fixtures: {0}")]
    Fixture(String),
    #[error("io: {0}")]
    Io(String),
}
