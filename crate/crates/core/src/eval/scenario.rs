//! Name and query lookup for shipped scenario scripts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::EvalError;

/// A query paired with the script and fixtures that replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub query: String,
    pub script: PathBuf,
    pub fixtures: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
struct DemoEntry {
    name: String,
    query: String,
    scenario_script: String,
    #[serde(default = "default_fixtures")]
    fixtures_ref: String,
}

fn default_fixtures() -> String {
    "fixtures".into()
}

/// Corpus entries and named demonstrations.
#[derive(Debug, Clone)]
pub struct ScenarioCatalog {
    scenarios: Vec<Scenario>,
}

impl ScenarioCatalog {
    pub fn new(corpus: &Corpus, demos_path: Option<&Path>) -> Result<Self, EvalError> {
        let mut scenarios: Vec<Scenario> = corpus
            .entries
            .iter()
            .map(|e| Scenario {
                name: e.id.clone(),
                query: e.query.clone(),
                script: corpus.resolve(&e.scenario_script),
                fixtures: corpus.resolve(&e.fixtures_ref),
            })
            .collect();
        if let Some(path) = demos_path {
            let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
            let demos: Vec<DemoEntry> =
                serde_json::from_str(&text).map_err(|e| EvalError::Corpus(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            scenarios.extend(demos.into_iter().map(|d| Scenario {
                name: d.name,
                query: d.query,
                script: base.join(d.scenario_script),
                fixtures: base.join(d.fixtures_ref),
            }));
        }
        Ok(Self { scenarios })
    }

    pub fn builtin() -> Result<Self, EvalError> {
        let dir = crate::data::default_data_dir();
        Self::new(&Corpus::builtin()?, Some(&dir.join("demos.json")))
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    /// Case-insensitive lookup by corpus id or demo name.
    pub fn by_name(&self, name: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// Exact query match, ignoring surrounding and repeated whitespace.
    pub fn by_query(&self, query: &str) -> Option<&Scenario> {
        let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let q = squash(query);
        self.scenarios.iter().find(|s| squash(&s.query) == q)
    }

    /// Resolves a name, then a script path (fixtures default to the shared set).
    pub fn resolve(&self, name_or_path: &str, query: &str) -> Result<Scenario, EvalError> {
        if let Some(s) = self.by_name(name_or_path) {
            return Ok(s.clone());
        }
        let path = PathBuf::from(name_or_path);
        if path.is_file() {
            return Ok(Scenario {
                name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                query: query.to_string(),
                script: path,
                fixtures: crate::data::default_data_dir().join("fixtures"),
            });
        }
        Err(EvalError::Script(format!("no scenario named {name_or_path} and no such file")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve_case_insensitively() {
        let cat = ScenarioCatalog::builtin().unwrap();
        let s = cat.resolve("s02", "").unwrap();
        assert_eq!(s.name, "S02");
        assert!(s.script.is_file());
        let d = cat.by_name("Four-Tracks").unwrap();
        assert!(d.script.is_file());
        assert!(d.fixtures.join("index.json").is_file());
        assert!(cat.resolve("nope", "").is_err());
    }

    #[test]
    fn queries_match_modulo_whitespace() {
        let cat = ScenarioCatalog::builtin().unwrap();
        let s02 = cat.by_name("S02").unwrap().clone();
        let spaced = format!("  {}  ", s02.query.replace(' ', "  "));
        assert_eq!(cat.by_query(&spaced), Some(&s02));
    }
}
