//! Where each session's model and tool backends come from.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use stormleg_core::eval::ScenarioCatalog;
use stormleg_core::executor::AblationVariant;
use stormleg_core::llm::{ChatBackend, ScriptedBackend};
use stormleg_core::tools::{FixtureBackend, ToolBackend};

pub type Backends = (Arc<dyn ChatBackend>, Arc<dyn ToolBackend>);

pub trait BackendProvider: Send + Sync {
    /// `scenario` is an optional hint naming a scripted scenario.
    fn backends(&self, query: &str, scenario: Option<&str>, variant: AblationVariant) -> Result<Backends, String>;
}

/// Shared live backends for every session.
pub struct LiveProvider {
    model: Arc<dyn ChatBackend>,
    tools: Arc<dyn ToolBackend>,
}

impl LiveProvider {
    pub fn new(model: Arc<dyn ChatBackend>, tools: Arc<dyn ToolBackend>) -> Self {
        Self { model, tools }
    }
}

impl BackendProvider for LiveProvider {
    fn backends(&self, _query: &str, _scenario: Option<&str>, _variant: AblationVariant) -> Result<Backends, String> {
        Ok((self.model.clone(), self.tools.clone()))
    }
}

/// Replays shipped scenario scripts, chosen by name or by exact query text.
pub struct ScriptedProvider {
    catalog: ScenarioCatalog,
    fixtures: Mutex<HashMap<PathBuf, Arc<FixtureBackend>>>,
}

impl ScriptedProvider {
    pub fn new(catalog: ScenarioCatalog) -> Self {
        Self { catalog, fixtures: Mutex::new(HashMap::new()) }
    }

    fn fixture_backend(&self, dir: &Path) -> Result<Arc<FixtureBackend>, String> {
        let mut cache = self.fixtures.lock().expect("fixture cache");
        if let Some(b) = cache.get(dir) {
            return Ok(b.clone());
        }
        let b = Arc::new(FixtureBackend::from_dir(dir).map_err(|e| e.to_string())?);
        cache.insert(dir.to_path_buf(), b.clone());
        Ok(b)
    }
}

impl BackendProvider for ScriptedProvider {
    fn backends(&self, query: &str, scenario: Option<&str>, variant: AblationVariant) -> Result<Backends, String> {
        let s = match scenario {
            Some(name) => self.catalog.resolve(name, query).map_err(|e| e.to_string())?,
            None => self
                .catalog
                .by_query(query)
                .cloned()
                .ok_or_else(|| "no scripted scenario matches this query; pass a scenario name".to_string())?,
        };
        let mut script = s.script.clone();
        if variant == AblationVariant::FixedGraph {
            if let (Some(dir), Some(file)) = (script.parent(), script.file_name()) {
                let alt = dir.join("fixed_graph").join(file);
                if alt.is_file() {
                    script = alt;
                }
            }
        }
        let model = ScriptedBackend::from_path(&script).map_err(|e| e.to_string())?;
        Ok((Arc::new(model), self.fixture_backend(&s.fixtures)?))
    }
}
