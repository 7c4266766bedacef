//! Agent registry: identity, routing capabilities and the enforced tool allowlist.
//!
//! The registry is loaded from a single JSON manifest of the shape
//! `{"agents": [...], "roles": {...}}`. It is immutable after load and can be
//! shared freely between concurrent executors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Errors raised while loading or querying a registry.
#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("manifest is not valid JSON: {0}")]
    Parse(String),
    #[error("duplicate agent id: {0}")]
    DuplicateId(String),
    #[error("specialist {0} has no data_class")]
    MissingDataClass(String),
    #[error("general-purpose agent {0} must have data_class none")]
    UnexpectedDataClass(String),
    #[error("general-purpose agent {0} must not list tools")]
    GeneralWithTools(String),
    #[error("agent {agent}: tool {tool} listed in tool_names has no schema")]
    ToolWithoutSchema { agent: String, tool: String },
    #[error("agent {agent}: schema {tool} is not listed in tool_names")]
    SchemaWithoutTool { agent: String, tool: String },
    #[error("agent {agent}: tool {tool} has more than one schema")]
    DuplicateSchema { agent: String, tool: String },
    #[error("missing general role: {0}")]
    MissingRole(Role),
    #[error("role {role} is bound to unknown agent {agent}")]
    RoleUnknownAgent { role: Role, agent: String },
    #[error("role {role} is bound to {agent}, which is not a general-purpose agent")]
    RoleNotGeneral { role: Role, agent: String },
    #[error("agent {agent} is bound to more than one general role")]
    SharedRoleAgent { agent: String },
    #[error("unknown agent: {0}")]
    UnknownAgent(String),
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Specialist,
    GeneralPurpose,
}

/// The data-class tag that governs which specialists may share a layer.
///
/// Variant order is the canonical layer order used when splitting mixed
/// layers: observation, then hypothetical, then forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataClass {
    Observation,
    Hypothetical,
    Forecast,
    None,
}

impl fmt::Display for DataClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataClass::Observation => "observation",
            DataClass::Hypothetical => "hypothetical",
            DataClass::Forecast => "forecast",
            DataClass::None => "none",
        };
        f.write_str(s)
    }
}

/// General-purpose roles the runtime binds by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Architect,
    Consolidator,
    CrossTrackMerge,
    Image,
    Reporter,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Architect,
        Role::Consolidator,
        Role::CrossTrackMerge,
        Role::Image,
        Role::Reporter,
    ];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Architect => "architect",
            Role::Consolidator => "consolidator",
            Role::CrossTrackMerge => "cross_track_merge",
            Role::Image => "image",
            Role::Reporter => "reporter",
        };
        f.write_str(s)
    }
}

/// A function-tool schema document as shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "empty_parameters")]
    pub parameters: Value,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn empty_parameters() -> Value {
    serde_json::json!({"type": "object", "properties": {}})
}

/// One registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    #[serde(default = "default_data_class")]
    pub data_class: DataClass,
    #[serde(default)]
    pub system_prompt: String,
    #[serde(default)]
    pub router_capabilities: String,
    #[serde(default)]
    pub tool_names: BTreeSet<String>,
    #[serde(default)]
    pub tool_schemas: Vec<ToolSchema>,
    #[serde(default)]
    pub produces_images: bool,
    /// Unknown manifest fields, kept so a reserialized manifest loses nothing.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_data_class() -> DataClass {
    DataClass::None
}

impl AgentSpec {
    pub fn is_specialist(&self) -> bool {
        self.kind == AgentKind::Specialist
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    agents: Vec<AgentSpec>,
    #[serde(default)]
    roles: BTreeMap<Role, String>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// A validated, immutable agent registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    manifest: Manifest,
    index: HashMap<String, usize>,
}

/// What the architect sees about a specialist. System prompts and tool
/// schemas are deliberately absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub data_class: DataClass,
    pub router_capabilities: String,
    pub produces_images: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpecialistCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl SpecialistCatalog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Compact JSON rendering used inside the architect prompt.
    pub fn to_prompt_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).unwrap_or_default()
    }
}

/// The outcome of an allowlist check, carried into the provenance ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowDecision {
    pub agent_id: String,
    pub tool_name: String,
    pub permitted: bool,
}

impl Registry {
    /// Parses and validates a manifest document.
    pub fn from_json(source: &str) -> Result<Self, RegistryError> {
        let manifest: Manifest =
            serde_json::from_str(source).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_manifest(manifest)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// The registry shipped with the crate (six specialists, five general agents).
    pub fn builtin() -> Self {
        Self::from_json(crate::data::BUILTIN_REGISTRY).expect("bundled registry is valid")
    }

    fn from_manifest(manifest: Manifest) -> Result<Self, RegistryError> {
        let mut index = HashMap::new();
        for (i, agent) in manifest.agents.iter().enumerate() {
            if index.insert(agent.id.clone(), i).is_some() {
                return Err(RegistryError::DuplicateId(agent.id.clone()));
            }
            validate_agent(agent)?;
        }

        let mut bound = HashMap::new();
        for role in Role::ALL {
            let agent_id = manifest
                .roles
                .get(&role)
                .ok_or(RegistryError::MissingRole(role))?;
            let agent = index
                .get(agent_id)
                .map(|&i| &manifest.agents[i])
                .ok_or_else(|| RegistryError::RoleUnknownAgent {
                    role,
                    agent: agent_id.clone(),
                })?;
            if agent.kind != AgentKind::GeneralPurpose {
                return Err(RegistryError::RoleNotGeneral {
                    role,
                    agent: agent_id.clone(),
                });
            }
            if bound.insert(agent_id.clone(), role).is_some() {
                return Err(RegistryError::SharedRoleAgent {
                    agent: agent_id.clone(),
                });
            }
        }

        Ok(Self { manifest, index })
    }

    /// Serializes back to the manifest format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes")
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.manifest.agents.iter()
    }

    pub fn len(&self) -> usize {
        self.manifest.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.agents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AgentSpec> {
        self.index.get(id).map(|&i| &self.manifest.agents[i])
    }

    pub fn agent(&self, id: &str) -> Result<&AgentSpec, RegistryError> {
        self.get(id)
            .ok_or_else(|| RegistryError::UnknownAgent(id.to_string()))
    }

    pub fn specialists(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents().filter(|a| a.is_specialist())
    }

    /// The agent id bound to a general role. Always present after load.
    pub fn role(&self, role: Role) -> &str {
        &self.manifest.roles[&role]
    }

    pub fn role_of(&self, agent_id: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| self.role(*r) == agent_id)
    }

    pub fn catalog_for_architect(&self) -> SpecialistCatalog {
        SpecialistCatalog {
            entries: self
                .specialists()
                .map(|a| CatalogEntry {
                    id: a.id.clone(),
                    data_class: a.data_class,
                    router_capabilities: a.router_capabilities.clone(),
                    produces_images: a.produces_images,
                })
                .collect(),
        }
    }

    pub fn check_allowlist(
        &self,
        agent_id: &str,
        tool_name: &str,
    ) -> Result<AllowDecision, RegistryError> {
        let agent = self.agent(agent_id)?;
        Ok(AllowDecision {
            agent_id: agent_id.to_string(),
            tool_name: tool_name.to_string(),
            permitted: agent.tool_names.contains(tool_name),
        })
    }
}

fn validate_agent(agent: &AgentSpec) -> Result<(), RegistryError> {
    match agent.kind {
        AgentKind::Specialist if agent.data_class == DataClass::None => {
            return Err(RegistryError::MissingDataClass(agent.id.clone()));
        }
        AgentKind::GeneralPurpose if agent.data_class != DataClass::None => {
            return Err(RegistryError::UnexpectedDataClass(agent.id.clone()));
        }
        AgentKind::GeneralPurpose if !agent.tool_names.is_empty() => {
            return Err(RegistryError::GeneralWithTools(agent.id.clone()));
        }
        _ => {}
    }

    let mut seen = BTreeSet::new();
    for schema in &agent.tool_schemas {
        if !seen.insert(schema.name.as_str()) {
            return Err(RegistryError::DuplicateSchema {
                agent: agent.id.clone(),
                tool: schema.name.clone(),
            });
        }
        if !agent.tool_names.contains(&schema.name) {
            return Err(RegistryError::SchemaWithoutTool {
                agent: agent.id.clone(),
                tool: schema.name.clone(),
            });
        }
    }
    if let Some(missing) = agent.tool_names.iter().find(|t| !seen.contains(t.as_str())) {
        return Err(RegistryError::ToolWithoutSchema {
            agent: agent.id.clone(),
            tool: missing.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn general(id: &str) -> Value {
        json!({"id": id, "kind": "general_purpose", "system_prompt": format!("You are {id}.")})
    }

    fn roles() -> Value {
        json!({
            "architect": "graph_architect",
            "consolidator": "consolidator",
            "cross_track_merge": "cross_track_merge",
            "image": "image",
            "reporter": "reporter"
        })
    }

    fn manifest_with(agents: Vec<Value>) -> String {
        let mut all = agents;
        for id in ["graph_architect", "consolidator", "cross_track_merge", "image", "reporter"] {
            all.push(general(id));
        }
        json!({"agents": all, "roles": roles()}).to_string()
    }

    #[test]
    fn builtin_has_six_specialists_and_five_general_agents() {
        let reg = Registry::builtin();
        assert_eq!(reg.len(), 11);
        assert_eq!(reg.specialists().count(), 6);
        assert_eq!(reg.role(Role::Architect), "graph_architect");
    }

    #[test]
    fn empty_manifest_reports_missing_architect() {
        let err = Registry::from_json(r#"{"agents": [], "roles": {}}"#).unwrap_err();
        assert_eq!(err.to_string(), "missing general role: architect");
    }

    #[test]
    fn tool_without_schema_names_agent_and_tool() {
        let src = manifest_with(vec![json!({
            "id": "nhc", "kind": "specialist", "data_class": "observation",
            "tool_names": ["x"], "tool_schemas": []
        })]);
        let err = Registry::from_json(&src).unwrap_err();
        assert_eq!(
            err,
            RegistryError::ToolWithoutSchema { agent: "nhc".into(), tool: "x".into() }
        );
        let msg = err.to_string();
        assert!(msg.contains("nhc") && msg.contains('x'));
    }

    #[test]
    fn schema_without_tool_name_is_rejected() {
        let src = manifest_with(vec![json!({
            "id": "usgs", "kind": "specialist", "data_class": "observation",
            "tool_names": [], "tool_schemas": [{"name": "usgs_stn_get_hwms"}]
        })]);
        assert!(matches!(
            Registry::from_json(&src),
            Err(RegistryError::SchemaWithoutTool { .. })
        ));
    }

    #[test]
    fn duplicate_ids_and_missing_data_class_are_rejected() {
        let spec = json!({"id": "nhc", "kind": "specialist", "data_class": "observation"});
        let src = manifest_with(vec![spec.clone(), spec]);
        assert_eq!(
            Registry::from_json(&src).unwrap_err(),
            RegistryError::DuplicateId("nhc".into())
        );

        let src = manifest_with(vec![json!({"id": "fema", "kind": "specialist"})]);
        assert_eq!(
            Registry::from_json(&src).unwrap_err(),
            RegistryError::MissingDataClass("fema".into())
        );
    }

    #[test]
    fn roles_must_bind_distinct_general_agents() {
        let mut m: Value = serde_json::from_str(&manifest_with(vec![])).unwrap();
        m["roles"]["reporter"] = json!("consolidator");
        let err = Registry::from_json(&m.to_string()).unwrap_err();
        assert!(matches!(err, RegistryError::SharedRoleAgent { .. }));
    }

    #[test]
    fn catalog_is_a_projection_without_prompts() {
        let reg = Registry::builtin();
        let catalog = reg.catalog_for_architect();
        assert_eq!(catalog.len(), 6);
        let rendered = serde_json::to_string(&catalog).unwrap();
        assert!(!rendered.contains("system_prompt"));
        assert!(!rendered.contains("tool_schemas"));
        let stofs = catalog.entries.iter().find(|e| e.id == "stofs").unwrap();
        assert!(stofs.produces_images);
    }

    #[test]
    fn catalog_of_registry_without_specialists_is_empty() {
        let reg = Registry::from_json(&manifest_with(vec![])).unwrap();
        assert!(reg.catalog_for_architect().is_empty());
    }

    #[test]
    fn allowlist_examples() {
        let reg = Registry::builtin();
        assert!(reg.check_allowlist("noaa_coops", "noaa_search_stations").unwrap().permitted);
        assert!(!reg.check_allowlist("noaa_coops", "nhc_get_best_track").unwrap().permitted);
        let d = reg.check_allowlist("reporter", "noaa_search_stations").unwrap();
        assert!(!d.permitted);
        assert_eq!(d.agent_id, "reporter");
        assert_eq!(
            reg.check_allowlist("ghost", "x").unwrap_err(),
            RegistryError::UnknownAgent("ghost".into())
        );
    }

    #[test]
    fn allowlist_is_sound_over_the_builtin_registry() {
        let reg = Registry::builtin();
        let all_tools: BTreeSet<String> = reg
            .agents()
            .flat_map(|a| a.tool_names.iter().cloned())
            .chain(["not_a_tool".to_string()])
            .collect();
        for agent in reg.agents() {
            for tool in &all_tools {
                let permitted = reg.check_allowlist(&agent.id, tool).unwrap().permitted;
                assert_eq!(permitted, agent.tool_names.contains(tool), "{} / {tool}", agent.id);
            }
        }
    }

    #[test]
    fn unknown_fields_survive_a_round_trip() {
        let mut m: Value = serde_json::from_str(&manifest_with(vec![json!({
            "id": "nhc", "kind": "specialist", "data_class": "observation",
            "owner": "hydro-team",
            "tool_names": ["nhc_search_storms"],
            "tool_schemas": [{"name": "nhc_search_storms", "description": "d",
                              "parameters": {"type": "object"}, "strict": true}]
        })]))
        .unwrap();
        m["version"] = json!(3);
        let reg = Registry::from_json(&m.to_string()).unwrap();
        let again = Registry::from_json(&reg.to_json()).unwrap();
        assert_eq!(reg, again);
        assert!(reg.to_json().contains("hydro-team"));
        assert!(reg.to_json().contains("\"strict\": true"));
    }
}
