//! TOML configuration; every field is optional and defaults to the shipped data.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stormleg_core::data::default_data_dir;
use stormleg_core::eval::{Corpus, CostModel, ScenarioCatalog, StressSuite};
use stormleg_core::features::PatternTable;
use stormleg_core::llm::{ChatBackend, HttpBackend, ProviderConfig};
use stormleg_core::provenance::Ledger;
use stormleg_core::registry::Registry;
use stormleg_core::tools::{EndpointCatalog, HttpToolBackend, ToolBackend};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Agent registry JSON; the built-in registry when absent.
    pub registry: Option<PathBuf>,
    /// Directory with corpus.json, stress.json, demos.json, scenarios/ and fixtures/.
    pub data_dir: Option<PathBuf>,
    /// Where traces are persisted.
    pub ledger_dir: Option<PathBuf>,
    /// Where report files are written.
    pub out_dir: Option<PathBuf>,
    /// Feature pattern table JSON.
    pub patterns: Option<PathBuf>,
    /// Heuristic text handed to the architect.
    pub heuristics: Option<PathBuf>,
    /// Queries evaluated at once by the runners.
    pub concurrency: Option<usize>,
    #[serde(default)]
    pub cost: Option<CostModel>,
    /// Live model provider; scripted replay is used when absent.
    pub provider: Option<ProviderConfig>,
    /// Endpoint catalog for live tool calls.
    pub tools: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: CliConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.registry,
            &mut cfg.data_dir,
            &mut cfg.ledger_dir,
            &mut cfg.out_dir,
            &mut cfg.patterns,
            &mut cfg.heuristics,
            &mut cfg.tools,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Referenced inputs must exist at startup.
    fn check(&self) -> Result<()> {
        for (name, p) in [
            ("registry", &self.registry),
            ("data_dir", &self.data_dir),
            ("patterns", &self.patterns),
            ("heuristics", &self.heuristics),
            ("tools", &self.tools),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("config {name}: {} does not exist", p.display());
                }
            }
        }
        if self.concurrency == Some(0) {
            bail!("config concurrency must be at least 1");
        }
        if let Some(c) = self.cost {
            CostModel::new(c.input_rate, c.output_rate).map_err(anyhow::Error::msg)?;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(default_data_dir)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("reports"))
    }

    pub fn ledger_dir(&self) -> PathBuf {
        self.ledger_dir.clone().unwrap_or_else(|| PathBuf::from("ledger"))
    }

    pub fn registry(&self) -> Result<Arc<Registry>> {
        Ok(Arc::new(match &self.registry {
            Some(p) => Registry::from_path(p)?,
            None => Registry::builtin(),
        }))
    }

    pub fn patterns(&self) -> Result<PatternTable> {
        match &self.patterns {
            Some(p) => Ok(PatternTable::from_json(&std::fs::read_to_string(p)?)?),
            None => Ok(PatternTable::default()),
        }
    }

    pub fn heuristics_text(&self) -> Result<Option<String>> {
        self.heuristics.as_ref().map(|p| Ok(std::fs::read_to_string(p)?)).transpose()
    }

    pub fn cost(&self) -> CostModel {
        self.cost.unwrap_or_default()
    }

    pub fn ledger(&self) -> Result<Arc<Ledger>> {
        let dir = self.ledger_dir();
        Ok(Arc::new(Ledger::persistent(&dir).with_context(|| format!("opening ledger {}", dir.display()))?))
    }

    /// Loads a corpus by name (`all`, `subset7`, an id list) or by file path.
    pub fn corpus(&self, name: &str) -> Result<Corpus> {
        let path = Path::new(name);
        if path.extension().is_some_and(|e| e == "json") {
            return Ok(Corpus::load(path)?);
        }
        let full = Corpus::load(self.data_dir().join("corpus.json"))?;
        Ok(full.select(name)?)
    }

    pub fn stress_suite(&self) -> Result<StressSuite> {
        Ok(StressSuite::load(self.data_dir().join("stress.json"))?)
    }

    pub fn scenarios(&self) -> Result<ScenarioCatalog> {
        let dir = self.data_dir();
        let corpus = Corpus::load(dir.join("corpus.json"))?;
        let demos = dir.join("demos.json");
        Ok(ScenarioCatalog::new(&corpus, demos.is_file().then_some(demos.as_path()))?)
    }

    /// Live backends, when a provider and a tool catalog are configured.
    pub fn live_backends(&self) -> Result<Option<(Arc<dyn ChatBackend>, Arc<dyn ToolBackend>)>> {
        match (&self.provider, &self.tools) {
            (None, _) => Ok(None),
            (Some(_), None) => bail!("a live provider needs a tools endpoint catalog"),
            (Some(p), Some(t)) => {
                let model: Arc<dyn ChatBackend> = Arc::new(HttpBackend::new(p.clone())?);
                let catalog = EndpointCatalog::from_path(t).map_err(anyhow::Error::msg)?;
                Ok(Some((model, Arc::new(HttpToolBackend::new(catalog)))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reg.json"), stormleg_core::data::BUILTIN_REGISTRY).unwrap();
        let cfg_path = dir.path().join("stormleg.toml");
        std::fs::write(&cfg_path, "registry = \"reg.json\"\nledger_dir = \"traces\"\n[cost]\ninput_rate = 1.0\noutput_rate = 2.0\n").unwrap();
        let cfg = CliConfig::load(Some(&cfg_path)).unwrap();
        assert_eq!(cfg.registry.as_deref(), Some(dir.path().join("reg.json").as_path()));
        assert_eq!(cfg.ledger_dir(), dir.path().join("traces"));
        assert_eq!(cfg.cost().output_rate, 2.0);
        assert!(cfg.registry().unwrap().get("nhc").is_some());
    }

    #[test]
    fn missing_inputs_and_unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "registry = \"nope.json\"\n").unwrap();
        assert!(CliConfig::load(Some(&cfg_path)).is_err());
        std::fs::write(&cfg_path, "colour = \"red\"\n").unwrap();
        assert!(CliConfig::load(Some(&cfg_path)).is_err());
        std::fs::write(&cfg_path, "concurrency = 0\n").unwrap();
        assert!(CliConfig::load(Some(&cfg_path)).is_err());
    }
}
