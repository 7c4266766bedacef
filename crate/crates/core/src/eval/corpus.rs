//! Benchmark corpus and stress-suite definitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{QuantityKind, Reference, RubricComponent};
use super::EvalError;
use crate::plan::Topology;

/// The seven-query representative subset, one per complexity category.
pub const SUBSET7: [&str; 7] = ["S02", "L01", "L03", "M01", "O01", "P01", "C01"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SingleNhc,
    SingleFemaNoaa,
    LinearNhcNoaa,
    LinearNhcNu,
    Parallel2,
    Complex3,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SingleNhc,
        Category::SingleFemaNoaa,
        Category::LinearNhcNoaa,
        Category::LinearNhcNu,
        Category::Parallel2,
        Category::Complex3,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Category::SingleNhc => "Single NHC",
            Category::SingleFemaNoaa => "Single FEMA/NOAA",
            Category::LinearNhcNoaa => "Linear NHC→NOAA",
            Category::LinearNhcNu => "Linear NHC→N+U",
            Category::Parallel2 => "Parallel 2-Track",
            Category::Complex3 => "Complex 3-Track",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub category: Category,
    pub query: String,
    pub kind: QuantityKind,
    pub expected_topology: Topology,
    pub expected_agents: BTreeSet<String>,
    pub ground_truth: Reference,
    pub rubric: Vec<RubricComponent>,
    #[serde(default)]
    pub source_citation: String,
    /// Script path relative to the data directory.
    pub scenario_script: String,
    /// Fixture directory relative to the data directory.
    pub fixtures_ref: String,
    /// Independent sub-questions the query contains.
    #[serde(default = "one")]
    pub sub_questions: usize,
}

fn one() -> usize {
    1
}

impl CorpusEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.query.trim().is_empty() {
            return Err(format!("{}: empty query", self.id));
        }
        if self.kind != self.ground_truth.kind() {
            return Err(format!("{}: kind {:?} does not match ground truth {:?}", self.id, self.kind, self.ground_truth.kind()));
        }
        self.ground_truth.validate().map_err(|e| format!("{}: {e}", self.id))?;
        if self.expected_agents.is_empty() {
            return Err(format!("{}: expected agent set is empty", self.id));
        }
        if self.rubric.is_empty() {
            return Err(format!("{}: attribution rubric is empty", self.id));
        }
        for c in &self.rubric {
            regex::Regex::new(&c.pattern).map_err(|e| format!("{}: rubric {}: {e}", self.id, c.name))?;
        }
        if self.sub_questions == 0 {
            return Err(format!("{}: sub_questions must be at least 1", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    /// Directory script and fixture paths are resolved against.
    pub base_dir: PathBuf,
}

impl Corpus {
    pub fn from_entries(entries: Vec<CorpusEntry>, base_dir: impl Into<PathBuf>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            e.validate().map_err(EvalError::Corpus)?;
            if !seen.insert(e.id.clone()) {
                return Err(EvalError::Corpus(format!("duplicate id {}", e.id)));
            }
        }
        Ok(Self { entries, base_dir: base_dir.into() })
    }

    /// Loads a JSON array of entries; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        let entries: Vec<CorpusEntry> =
            serde_json::from_str(&text).map_err(|e| EvalError::Corpus(format!("{}: {e}", path.display())))?;
        Self::from_entries(entries, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn builtin() -> Result<Self, EvalError> {
        Self::load(crate::data::default_data_dir().join("corpus.json"))
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entries with the given ids, in the order given.
    pub fn subset(&self, ids: &[&str]) -> Result<Corpus, EvalError> {
        let entries = ids
            .iter()
            .map(|id| self.get(id).cloned().ok_or_else(|| EvalError::UnknownQuery(id.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus { entries, base_dir: self.base_dir.clone() })
    }

    /// Resolves a named subset (`subset7`, `all`) or a comma-separated id list.
    pub fn select(&self, name: &str) -> Result<Corpus, EvalError> {
        match name {
            "subset7" | "subset" => self.subset(&SUBSET7),
            "all" | "corpus" => Ok(self.clone()),
            list => {
                let ids: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                self.subset(&ids)
            }
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn by_category(&self) -> BTreeMap<Category, Vec<&CorpusEntry>> {
        let mut out: BTreeMap<Category, Vec<&CorpusEntry>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.category).or_default().push(e);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseVariant {
    pub variant: String,
    pub query: String,
    pub scenario_script: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseGroup {
    /// Corpus id of the original phrasing.
    pub group: String,
    pub label: String,
    pub variants: Vec<ParaphraseVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialCase {
    pub id: String,
    pub adversarial_type: String,
    pub query: String,
    pub expected_behavior: String,
    pub scenario_script: String,
    pub reference_agents: BTreeSet<String>,
    /// Matches when the final answer flags the faulty premise.
    pub issue_pattern: String,
    /// Any match marks a fabricated value.
    pub fabrication_patterns: Vec<String>,
    /// Matches when the answer engages with the question.
    pub responsive_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSource {
    pub agent: String,
    pub label: String,
    /// Matches when the final answer acknowledges the missing source.
    pub limitation_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSuite {
    pub query: String,
    pub scenario_script: String,
    pub sources: Vec<FaultSource>,
    /// Matches when the answer carries data from a surviving source.
    pub partial_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressSuite {
    /// Extra scaling queries beyond the benchmark corpus (four and five tracks).
    pub scaling: Vec<CorpusEntry>,
    pub paraphrase: Vec<ParaphraseGroup>,
    pub adversarial: Vec<AdversarialCase>,
    pub fault: FaultSuite,
    /// Wrong-topology architect scripts keyed by corpus id.
    #[serde(default)]
    pub topology_faults: BTreeMap<String, String>,
}

impl StressSuite {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        let suite: StressSuite =
            serde_json::from_str(&text).map_err(|e| EvalError::Corpus(format!("{}: {e}", path.display())))?;
        for e in &suite.scaling {
            e.validate().map_err(EvalError::Corpus)?;
        }
        for a in &suite.adversarial {
            for p in std::iter::once(&a.issue_pattern).chain(&a.fabrication_patterns).chain(std::iter::once(&a.responsive_pattern)) {
                regex::Regex::new(p).map_err(|e| EvalError::Corpus(format!("{}: {e}", a.id)))?;
            }
        }
        Ok(suite)
    }

    pub fn builtin() -> Result<Self, EvalError> {
        Self::load(crate::data::default_data_dir().join("stress.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn entry(id: &str) -> serde_json::Value {
        json!({
            "id": id, "category": "single_nhc", "query": "What category was Hurricane Harvey at landfall in Texas in 2017?",
            "kind": "category", "expected_topology": "linear", "expected_agents": ["nhc"],
            "ground_truth": {"kind": "category", "label": "Cat 4"},
            "rubric": [{"name": "source", "pattern": "(?i)NHC"}, {"name": "storm_id", "pattern": "AL092017"}],
            "scenario_script": "scenarios/S03.json", "fixtures_ref": "fixtures"
        })
    }

    fn parse(v: serde_json::Value) -> Vec<CorpusEntry> {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn duplicate_ids_and_bad_entries_are_rejected() {
        assert!(Corpus::from_entries(parse(json!([entry("S03")])), ".").is_ok());
        assert!(matches!(Corpus::from_entries(parse(json!([entry("S03"), entry("S03")])), "."), Err(EvalError::Corpus(_))));
        let mut bad = entry("X");
        bad["kind"] = json!("surge");
        assert!(Corpus::from_entries(parse(json!([bad])), ".").is_err());
        let mut bad = entry("X");
        bad["expected_agents"] = json!([]);
        assert!(Corpus::from_entries(parse(json!([bad])), ".").is_err());
        let mut bad = entry("X");
        bad["ground_truth"] = json!({"kind": "multi", "parts": [{"kind": "count", "value": 3}]});
        bad["kind"] = json!("multi");
        assert!(Corpus::from_entries(parse(json!([bad])), ".").is_err());
    }

    #[test]
    fn subset_resolution_reports_unknown_ids() {
        let c = Corpus::from_entries(parse(json!([entry("S03"), entry("S04")])), ".").unwrap();
        assert_eq!(c.select("S04, S03").unwrap().entries[0].id, "S04");
        assert!(matches!(c.select("S09"), Err(EvalError::UnknownQuery(id)) if id == "S09"));
    }
}
