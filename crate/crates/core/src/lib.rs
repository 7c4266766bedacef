//! Layer Execution Graph runtime: registry, planning, rewrite, compilation,
//! execution with provenance, and the evaluation harness.

pub mod data;
pub mod features;
pub mod leg;
pub mod plan;
pub mod prompts;
pub mod registry;
pub mod rewrite;
pub mod llm;
pub mod provenance;
pub mod tools;
pub mod architect;
pub mod executor;
pub mod pipeline;
pub mod eval;
