//! Configuration bundled into the binary.

use std::path::PathBuf;

pub const BUILTIN_REGISTRY: &str = include_str!("../data/registry.json");
pub const DEFAULT_PATTERNS: &str = include_str!("../data/patterns.json");
pub const DEFAULT_HEURISTICS: &str = include_str!("../data/heuristics.md");

/// Directory holding the shipped corpus, scenarios and fixtures.
pub fn default_data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}
