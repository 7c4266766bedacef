//! Plan documents produced by the architect, and their validation.
//!
//! Wire format: `{"topology": "linear" | "parallel_tracks",
//! "tracks": [{"goal": "...", "layers": [["agent", ...], ...]}], "rationale": "..."}`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::registry::{AgentKind, Registry, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Linear,
    ParallelTracks,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Linear => "linear",
            Topology::ParallelTracks => "parallel_tracks",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerSpec {
    pub agent_ids: Vec<String>,
}

impl LayerSpec {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            agent_ids: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.agent_ids.iter().any(|a| a == id)
    }

    pub fn len(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackSpec {
    #[serde(rename = "goal", default)]
    pub goal_text: String,
    pub layers: Vec<LayerSpec>,
}

impl TrackSpec {
    pub fn specialists(&self) -> impl Iterator<Item = &str> {
        self.layers
            .iter()
            .flat_map(|l| l.agent_ids.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub topology: Topology,
    pub tracks: Vec<TrackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl PlanSpec {
    pub fn linear(goal: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        Self {
            topology: Topology::Linear,
            tracks: vec![TrackSpec {
                goal_text: goal.into(),
                layers,
            }],
            rationale: None,
        }
    }

    /// Every specialist id scheduled anywhere in the plan.
    pub fn selected_agents(&self) -> BTreeSet<String> {
        self.tracks
            .iter()
            .flat_map(|t| t.specialists().map(str::to_string))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanParseError {
    #[error("not a plan document: {0}")]
    NotAPlan(String),
    #[error("unknown topology token: {0}")]
    UnknownTopology(String),
    #[error("track {0} has no layers")]
    EmptyTrack(usize),
    #[error("track {track} layer {layer} is empty")]
    EmptyLayer { track: usize, layer: usize },
    #[error("malformed element at {path}: {message}")]
    Malformed { path: String, message: String },
}

/// Parses architect output into a plan.
///
/// The plan may be wrapped in prose or a fenced code block; the first
/// balanced JSON object is taken.
pub fn parse_plan(text: &str) -> Result<PlanSpec, PlanParseError> {
    let object = extract_json_object(text)
        .ok_or_else(|| PlanParseError::NotAPlan(preview(text)))?;
    let doc: Value = serde_json::from_str(object)
        .map_err(|e| PlanParseError::NotAPlan(format!("{e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| PlanParseError::NotAPlan("expected an object".into()))?;

    let topology = match obj.get("topology") {
        Some(Value::String(s)) => match s.as_str() {
            "linear" => Topology::Linear,
            "parallel_tracks" => Topology::ParallelTracks,
            other => return Err(PlanParseError::UnknownTopology(other.to_string())),
        },
        Some(other) => return Err(PlanParseError::UnknownTopology(other.to_string())),
        None => return Err(PlanParseError::NotAPlan("missing topology".into())),
    };

    let tracks = obj
        .get("tracks")
        .and_then(Value::as_array)
        .ok_or_else(|| PlanParseError::NotAPlan("missing tracks array".into()))?;

    let mut parsed = Vec::with_capacity(tracks.len());
    for (t, track) in tracks.iter().enumerate() {
        let goal = match track.get("goal") {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(PlanParseError::Malformed {
                    path: format!("tracks[{t}].goal"),
                    message: "expected a string".into(),
                })
            }
        };
        let layers = track
            .get("layers")
            .and_then(Value::as_array)
            .ok_or_else(|| PlanParseError::Malformed {
                path: format!("tracks[{t}].layers"),
                message: "expected an array of layers".into(),
            })?;
        if layers.is_empty() {
            return Err(PlanParseError::EmptyTrack(t));
        }
        let mut parsed_layers = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let ids = layer.as_array().ok_or_else(|| PlanParseError::Malformed {
                path: format!("tracks[{t}].layers[{l}]"),
                message: "expected an array of agent ids".into(),
            })?;
            if ids.is_empty() {
                return Err(PlanParseError::EmptyLayer { track: t, layer: l });
            }
            let mut agent_ids = Vec::with_capacity(ids.len());
            for (i, id) in ids.iter().enumerate() {
                let id = id.as_str().ok_or_else(|| PlanParseError::Malformed {
                    path: format!("tracks[{t}].layers[{l}][{i}]"),
                    message: "expected an agent id string".into(),
                })?;
                agent_ids.push(id.to_string());
            }
            parsed_layers.push(LayerSpec { agent_ids });
        }
        parsed.push(TrackSpec {
            goal_text: goal,
            layers: parsed_layers,
        });
    }

    let rationale = obj
        .get("rationale")
        .and_then(Value::as_str)
        .map(str::to_string);

    Ok(PlanSpec {
        topology,
        tracks: parsed,
        rationale,
    })
}

fn preview(text: &str) -> String {
    let trimmed: String = text.trim().chars().take(60).collect();
    if trimmed.is_empty() {
        "empty input".into()
    } else {
        trimmed
    }
}

/// Finds the first balanced `{...}` object, skipping over string literals.
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// A single reason a plan cannot be scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub track: Option<usize>,
    pub layer: Option<usize>,
    pub agent: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut loc = Vec::new();
        if let Some(t) = self.track {
            loc.push(format!("track {t}"));
        }
        if let Some(l) = self.layer {
            loc.push(format!("layer {l}"));
        }
        if let Some(a) = &self.agent {
            loc.push(format!("agent {a}"));
        }
        if loc.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", loc.join(", "), self.message)
        }
    }
}

pub fn validate_plan(plan: &PlanSpec, registry: &Registry) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, t, l, a: Option<&str>, m: &str| {
        out.push(Violation {
            track: t,
            layer: l,
            agent: a.map(str::to_string),
            message: m.to_string(),
        })
    };

    let n = plan.tracks.len();
    let topology_ok = match plan.topology {
        Topology::Linear => n == 1,
        Topology::ParallelTracks => n >= 2,
    };
    if !topology_ok {
        push(&mut out, None, None, None, "topology/track mismatch");
    }

    let architect = registry.role(Role::Architect);
    for (t, track) in plan.tracks.iter().enumerate() {
        if track.layers.is_empty() {
            push(&mut out, Some(t), None, None, "empty track");
        }
        for (l, layer) in track.layers.iter().enumerate() {
            if layer.is_empty() {
                push(&mut out, Some(t), Some(l), None, "empty layer");
            }
            let mut seen = BTreeSet::new();
            for id in &layer.agent_ids {
                if !seen.insert(id.as_str()) {
                    push(&mut out, Some(t), Some(l), Some(id), "duplicate agent in layer");
                }
                if id == architect {
                    push(&mut out, Some(t), Some(l), Some(id), "architect not schedulable");
                    continue;
                }
                match registry.get(id) {
                    None => push(&mut out, Some(t), Some(l), Some(id), "unknown agent"),
                    Some(a) if a.kind != AgentKind::Specialist => {
                        push(&mut out, Some(t), Some(l), Some(id), "not a specialist")
                    }
                    Some(_) => {}
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer_linear_plan() {
        let plan = parse_plan(
            r#"{"topology":"linear","tracks":[{"goal":"SF monthly maxima","layers":[["noaa_coops"]]}]}"#,
        )
        .unwrap();
        assert_eq!(plan.topology, Topology::Linear);
        assert_eq!(plan.tracks.len(), 1);
        assert_eq!(plan.tracks[0].layers, vec![LayerSpec::new(["noaa_coops"])]);
    }

    #[test]
    fn four_track_plan_inside_prose_and_fences() {
        let text = "Here is the plan:\n```json\n{\"topology\": \"parallel_tracks\", \"tracks\": [\
            {\"goal\": \"Ian surge {Fort Myers}\", \"layers\": [[\"nhc\"], [\"noaa_coops\"]]},\
            {\"goal\": \"HURDAT2 2011\", \"layers\": [[\"nhc\"]]},\
            {\"goal\": \"FEMA Miami\", \"layers\": [[\"fema\"]]},\
            {\"goal\": \"Seattle May 2025\", \"layers\": [[\"noaa_coops\"]]}],\
            \"rationale\": \"four independent questions\"}\n```";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.topology, Topology::ParallelTracks);
        assert_eq!(plan.tracks.len(), 4);
        assert_eq!(plan.tracks[0].goal_text, "Ian surge {Fort Myers}");
        assert_eq!(plan.rationale.as_deref(), Some("four independent questions"));
    }

    #[test]
    fn garbage_and_structural_errors() {
        assert!(matches!(parse_plan("hello"), Err(PlanParseError::NotAPlan(_))));
        assert!(matches!(
            parse_plan(r#"{"topology":"star","tracks":[]}"#),
            Err(PlanParseError::UnknownTopology(t)) if t == "star"
        ));
        assert_eq!(
            parse_plan(r#"{"topology":"linear","tracks":[{"goal":"g","layers":[]}]}"#),
            Err(PlanParseError::EmptyTrack(0))
        );
        assert_eq!(
            parse_plan(r#"{"topology":"linear","tracks":[{"goal":"g","layers":[["nhc"],[]]}]}"#),
            Err(PlanParseError::EmptyLayer { track: 0, layer: 1 })
        );
        assert!(matches!(
            parse_plan(r#"{"topology":"linear","tracks":[{"goal":"g","layers":[[3]]}]}"#),
            Err(PlanParseError::Malformed { path, .. }) if path == "tracks[0].layers[0][0]"
        ));
    }

    #[test]
    fn validation_examples() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["graph_architect"])]);
        let v = validate_plan(&plan, &reg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "architect not schedulable");
        assert_eq!(v[0].agent.as_deref(), Some("graph_architect"));

        let mut two = PlanSpec::linear("g", vec![LayerSpec::new(["nhc"])]);
        two.tracks.push(two.tracks[0].clone());
        let v = validate_plan(&two, &reg);
        assert_eq!(v[0].message, "topology/track mismatch");

        let three = PlanSpec {
            topology: Topology::ParallelTracks,
            tracks: vec![
                TrackSpec { goal_text: "a".into(), layers: vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops"])] },
                TrackSpec { goal_text: "b".into(), layers: vec![LayerSpec::new(["nhc"])] },
                TrackSpec { goal_text: "c".into(), layers: vec![LayerSpec::new(["fema"])] },
            ],
            rationale: None,
        };
        assert!(validate_plan(&three, &reg).is_empty());
    }

    #[test]
    fn validation_flags_unknown_general_and_duplicates() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear(
            "g",
            vec![LayerSpec::new(["nhc", "nhc", "reporter", "ghost"]), LayerSpec::new(Vec::<String>::new())],
        );
        let msgs: Vec<_> = validate_plan(&plan, &reg).into_iter().map(|v| v.message).collect();
        assert_eq!(
            msgs,
            ["duplicate agent in layer", "not a specialist", "unknown agent", "empty layer"]
        );
    }

    #[test]
    fn plan_json_round_trips() {
        let plan = parse_plan(
            r#"{"topology":"parallel_tracks","tracks":[{"goal":"a","layers":[["nhc"],["noaa_coops","usgs"]]},{"goal":"b","layers":[["fema"]]}]}"#,
        )
        .unwrap();
        assert_eq!(parse_plan(&plan.to_json()).unwrap(), plan);
    }
}
