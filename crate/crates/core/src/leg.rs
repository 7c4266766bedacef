//! Compiled Layer Execution Graphs.
//!
//! A plan layer compiles to up to three consecutive stages: the specialists
//! themselves, an image node when any of them produces images, and a
//! consolidator when the layer holds two or more specialists. Every node of
//! stage k feeds every node of stage k+1 in the same track; the last stage
//! of each track feeds the cross-track merge (two or more tracks) or the
//! reporter directly.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{validate_plan, LayerSpec, PlanSpec, Topology, Violation};
use crate::registry::{Registry, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Specialist,
    Consolidator,
    Image,
    CrossTrackMerge,
    Reporter,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Specialist => "specialist",
            NodeKind::Consolidator => "consolidator",
            NodeKind::Image => "image",
            NodeKind::CrossTrackMerge => "cross_track_merge",
            NodeKind::Reporter => "reporter",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegNode {
    pub node_id: String,
    pub kind: NodeKind,
    pub agent_id: String,
    /// `None` for the cross-track merge and reporter, which span tracks.
    pub track_index: Option<usize>,
    pub layer_index: usize,
    /// Index of the plan layer this node was compiled from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_layer: Option<usize>,
}

impl LegNode {
    fn new(kind: NodeKind, agent: &str, track: Option<usize>, layer: usize, plan_layer: Option<usize>) -> Self {
        let t = track.map_or_else(|| "*".to_string(), |t| t.to_string());
        Self {
            node_id: format!("t{t}.l{layer}.{agent}"),
            kind,
            agent_id: agent.to_string(),
            track_index: track,
            layer_index: layer,
            plan_layer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Specialists,
    Image,
    Consolidator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegStage {
    pub kind: StageKind,
    pub nodes: Vec<LegNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegTrack {
    pub goal_text: String,
    pub stages: Vec<LegStage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub topology: Topology,
    pub tracks: Vec<LegTrack>,
    pub merge: Option<LegNode>,
    pub reporter: LegNode,
}

/// Flat wire form: the node list plus explicit edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegView {
    pub topology: Topology,
    pub nodes: Vec<LegNode>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("plan does not validate: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Violation>),
    #[error("static graph needs specialist {0}, which is not in the registry")]
    MissingSpecialist(String),
}

impl Leg {
    /// All nodes in execution order: tracks in order, then merge, then reporter.
    pub fn nodes(&self) -> Vec<&LegNode> {
        let mut out: Vec<&LegNode> = self
            .tracks
            .iter()
            .flat_map(|t| t.stages.iter().flat_map(|s| s.nodes.iter()))
            .collect();
        out.extend(self.merge.iter());
        out.push(&self.reporter);
        out
    }

    pub fn node(&self, node_id: &str) -> Option<&LegNode> {
        self.nodes().into_iter().find(|n| n.node_id == node_id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        let mut edges = Vec::new();
        let sink = self.merge.as_ref().unwrap_or(&self.reporter);
        for track in &self.tracks {
            for pair in track.stages.windows(2) {
                for a in &pair[0].nodes {
                    for b in &pair[1].nodes {
                        edges.push((a.node_id.clone(), b.node_id.clone()));
                    }
                }
            }
            if let Some(last) = track.stages.last() {
                for a in &last.nodes {
                    edges.push((a.node_id.clone(), sink.node_id.clone()));
                }
            }
        }
        if let Some(m) = &self.merge {
            edges.push((m.node_id.clone(), self.reporter.node_id.clone()));
        }
        edges
    }

    /// Specialist ids scheduled anywhere in the graph.
    pub fn specialists(&self) -> BTreeSet<String> {
        self.nodes()
            .into_iter()
            .filter(|n| n.kind == NodeKind::Specialist)
            .map(|n| n.agent_id.clone())
            .collect()
    }

    pub fn view(&self) -> LegView {
        LegView {
            topology: self.topology,
            nodes: self.nodes().into_iter().cloned().collect(),
            edges: self.edges(),
        }
    }

    /// ASCII rendering, one line per stage.
    pub fn diagram(&self) -> String {
        let mut out = String::new();
        for (t, track) in self.tracks.iter().enumerate() {
            out.push_str(&format!("track {t}: {}\n", track.goal_text));
            for stage in &track.stages {
                let ids: Vec<&str> = stage.nodes.iter().map(|n| n.agent_id.as_str()).collect();
                out.push_str(&format!("  l{}  [{}]\n", stage.nodes[0].layer_index, ids.join(", ")));
            }
        }
        if let Some(m) = &self.merge {
            out.push_str(&format!("  l{}  [{}]\n", m.layer_index, m.agent_id));
        }
        out.push_str(&format!("  l{}  [{}]\n", self.reporter.layer_index, self.reporter.agent_id));
        out
    }

    /// Checks every structural invariant and returns the ones that fail.
    pub fn invariant_violations(&self, registry: &Registry) -> Vec<String> {
        let mut errs = Vec::new();
        let architect = registry.role(Role::Architect);
        let nodes = self.nodes();

        let ids: BTreeSet<&str> = nodes.iter().map(|n| n.node_id.as_str()).collect();
        if ids.len() != nodes.len() {
            errs.push("node ids are not unique".to_string());
        }
        if nodes.iter().any(|n| n.agent_id == architect) {
            errs.push("architect appears in the graph".to_string());
        }
        let reporters = nodes.iter().filter(|n| n.kind == NodeKind::Reporter).count();
        if reporters != 1 {
            errs.push(format!("{reporters} reporter nodes"));
        }
        if self.merge.is_some() != (self.tracks.len() >= 2) {
            errs.push("cross-track merge presence does not match track count".to_string());
        }
        if self.edges().iter().any(|(a, _)| a == &self.reporter.node_id) {
            errs.push("reporter is not terminal".to_string());
        }

        let by_id = |id: &str| nodes.iter().find(|n| n.node_id == id).copied();
        for (a, b) in self.edges() {
            let (Some(a), Some(b)) = (by_id(&a), by_id(&b)) else {
                errs.push("dangling edge".to_string());
                continue;
            };
            let spanning = matches!(b.kind, NodeKind::CrossTrackMerge | NodeKind::Reporter);
            if !(a.layer_index < b.layer_index || spanning) {
                errs.push(format!("edge {} -> {} is not forward", a.node_id, b.node_id));
            }
        }

        for (t, track) in self.tracks.iter().enumerate() {
            if track.stages.first().map(|s| s.kind) != Some(StageKind::Specialists) {
                errs.push(format!("track {t} does not start with specialists"));
            }
            for (s, stage) in track.stages.iter().enumerate() {
                if stage.nodes.is_empty() {
                    errs.push(format!("track {t} stage {s} is empty"));
                }
                if stage.nodes.iter().any(|n| n.layer_index != s || n.track_index != Some(t)) {
                    errs.push(format!("track {t} stage {s} has misnumbered nodes"));
                }
                if stage.kind != StageKind::Specialists {
                    continue;
                }
                let has_image = stage
                    .nodes
                    .iter()
                    .any(|n| registry.get(&n.agent_id).is_some_and(|a| a.produces_images));
                let mut next = track.stages.get(s + 1).map(|x| x.kind);
                if has_image {
                    if next != Some(StageKind::Image) {
                        errs.push(format!("track {t} stage {s} has images but no image node"));
                    }
                    next = track.stages.get(s + 2).map(|x| x.kind);
                }
                let multi = stage.nodes.len() >= 2;
                if multi && next != Some(StageKind::Consolidator) {
                    errs.push(format!("track {t} stage {s} has no consolidator"));
                }
                if !multi && next == Some(StageKind::Consolidator) {
                    errs.push(format!("track {t} stage {s} is consolidated with one specialist"));
                }
            }
            for pair in track.stages.windows(2) {
                if pair[1].kind != StageKind::Specialists && pair[1].nodes.len() != 1 {
                    errs.push(format!("track {t} has a general stage with several nodes"));
                }
            }
        }
        errs
    }
}

/// Compiles a validated plan into an executable graph.
pub fn compile_leg(plan: &PlanSpec, registry: &Registry) -> Result<Leg, CompileError> {
    let violations = validate_plan(plan, registry);
    if !violations.is_empty() {
        return Err(CompileError::InvalidPlan(violations));
    }
    let consolidator = registry.role(Role::Consolidator);
    let image = registry.role(Role::Image);

    let mut tracks = Vec::with_capacity(plan.tracks.len());
    for (t, spec) in plan.tracks.iter().enumerate() {
        let mut stages = Vec::new();
        for (pl, layer) in spec.layers.iter().enumerate() {
            let s = stages.len();
            stages.push(LegStage {
                kind: StageKind::Specialists,
                nodes: layer
                    .agent_ids
                    .iter()
                    .map(|a| LegNode::new(NodeKind::Specialist, a, Some(t), s, Some(pl)))
                    .collect(),
            });
            let images = layer
                .agent_ids
                .iter()
                .any(|a| registry.get(a).is_some_and(|x| x.produces_images));
            if images {
                let s = stages.len();
                stages.push(LegStage {
                    kind: StageKind::Image,
                    nodes: vec![LegNode::new(NodeKind::Image, image, Some(t), s, Some(pl))],
                });
            }
            if layer.len() >= 2 {
                let s = stages.len();
                stages.push(LegStage {
                    kind: StageKind::Consolidator,
                    nodes: vec![LegNode::new(NodeKind::Consolidator, consolidator, Some(t), s, Some(pl))],
                });
            }
        }
        tracks.push(LegTrack {
            goal_text: spec.goal_text.clone(),
            stages,
        });
    }

    let depth = tracks.iter().map(|t| t.stages.len()).max().unwrap_or(0);
    let merge = (tracks.len() >= 2).then(|| {
        LegNode::new(NodeKind::CrossTrackMerge, registry.role(Role::CrossTrackMerge), None, depth, None)
    });
    let reporter_layer = if merge.is_some() { depth + 1 } else { depth };
    let reporter = LegNode::new(NodeKind::Reporter, registry.role(Role::Reporter), None, reporter_layer, None);

    Ok(Leg {
        topology: plan.topology,
        tracks,
        merge,
        reporter,
    })
}

/// The fixed pipeline used when the architect is switched off.
pub fn static_plan(goal: &str) -> PlanSpec {
    PlanSpec::linear(
        goal,
        vec![
            LayerSpec::new(["nhc"]),
            LayerSpec::new(["noaa_coops", "usgs"]),
            LayerSpec::new(["fema"]),
        ],
    )
}

pub fn static_leg(registry: &Registry, goal: &str) -> Result<Leg, CompileError> {
    let plan = static_plan(goal);
    for id in plan.selected_agents() {
        if !registry.get(&id).is_some_and(|a| a.is_specialist()) {
            return Err(CompileError::MissingSpecialist(id));
        }
    }
    compile_leg(&plan, registry)
}

/// Node count predicted from the plan alone.
pub fn expected_node_count(plan: &PlanSpec, registry: &Registry) -> usize {
    let mut n = 1;
    if plan.tracks.len() >= 2 {
        n += 1;
    }
    for layer in plan.tracks.iter().flat_map(|t| &t.layers) {
        n += layer.len();
        if layer.len() >= 2 {
            n += 1;
        }
        if layer.agent_ids.iter().any(|a| registry.get(a).is_some_and(|x| x.produces_images)) {
            n += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::TrackSpec;

    fn kinds(leg: &Leg) -> Vec<(String, NodeKind)> {
        leg.nodes().into_iter().map(|n| (n.agent_id.clone(), n.kind)).collect()
    }

    #[test]
    fn single_specialist_then_reporter() {
        let reg = Registry::builtin();
        let leg = compile_leg(&PlanSpec::linear("g", vec![LayerSpec::new(["noaa_coops"])]), &reg).unwrap();
        let ids: Vec<_> = leg.nodes().iter().map(|n| n.node_id.clone()).collect();
        assert_eq!(ids, vec!["t0.l0.noaa_coops", "t*.l1.reporter"]);
        assert_eq!(leg.edges(), vec![("t0.l0.noaa_coops".into(), "t*.l1.reporter".into())]);
    }

    #[test]
    fn storm_then_gauge_and_hwm() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear(
            "g",
            vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops", "usgs"])],
        );
        let leg = compile_leg(&plan, &reg).unwrap();
        assert_eq!(
            kinds(&leg),
            vec![
                ("nhc".into(), NodeKind::Specialist),
                ("noaa_coops".into(), NodeKind::Specialist),
                ("usgs".into(), NodeKind::Specialist),
                ("consolidator".into(), NodeKind::Consolidator),
                ("reporter".into(), NodeKind::Reporter),
            ]
        );
        assert_eq!(leg.node("t0.l2.consolidator").unwrap().plan_layer, Some(1));
        assert!(leg.invariant_violations(&reg).is_empty());
    }

    #[test]
    fn image_layer_gets_image_node_then_consolidator() {
        let reg = Registry::builtin();
        let leg = compile_leg(&PlanSpec::linear("g", vec![LayerSpec::new(["stofs", "osm"])]), &reg).unwrap();
        let ids: Vec<_> = leg.nodes().iter().map(|n| n.node_id.clone()).collect();
        assert_eq!(
            ids,
            vec!["t0.l0.stofs", "t0.l0.osm", "t0.l1.image", "t0.l2.consolidator", "t*.l3.reporter"]
        );
        assert!(leg.invariant_violations(&reg).is_empty());
    }

    #[test]
    fn parallel_tracks_get_merge() {
        let reg = Registry::builtin();
        let plan = PlanSpec {
            topology: Topology::ParallelTracks,
            tracks: vec![
                TrackSpec { goal_text: "a".into(), layers: vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops"])] },
                TrackSpec { goal_text: "b".into(), layers: vec![LayerSpec::new(["nhc"])] },
            ],
            rationale: None,
        };
        let leg = compile_leg(&plan, &reg).unwrap();
        assert_eq!(leg.merge.as_ref().unwrap().node_id, "t*.l2.cross_track_merge");
        assert_eq!(leg.reporter.node_id, "t*.l3.reporter");
        assert!(leg.node("t0.l0.nhc").is_some() && leg.node("t1.l0.nhc").is_some());
        assert_eq!(leg.node_count(), expected_node_count(&plan, &reg));
        assert!(leg.edges().contains(&("t1.l0.nhc".into(), "t*.l2.cross_track_merge".into())));
    }

    #[test]
    fn static_leg_node_count_follows_formula() {
        // nhc, noaa_coops, usgs, consolidator, fema, reporter.
        let reg = Registry::builtin();
        let leg = static_leg(&reg, "q").unwrap();
        assert_eq!(leg.node_count(), 6);
        assert_eq!(leg.node_count(), expected_node_count(&static_plan("q"), &reg));
        assert_eq!(
            leg.specialists(),
            ["fema", "nhc", "noaa_coops", "usgs"].into_iter().map(String::from).collect()
        );
    }

    #[test]
    fn static_leg_requires_fema() {
        let mut manifest: serde_json::Value = serde_json::from_str(&Registry::builtin().to_json()).unwrap();
        manifest["agents"].as_array_mut().unwrap().retain(|a| a["id"] != "fema");
        let reg = Registry::from_json(&manifest.to_string()).unwrap();
        assert_eq!(static_leg(&reg, "q").unwrap_err(), CompileError::MissingSpecialist("fema".into()));
    }

    #[test]
    fn diagram_lists_stages() {
        let reg = Registry::builtin();
        let d = static_leg(&reg, "q").unwrap().diagram();
        assert!(d.contains("l1  [noaa_coops, usgs]"));
        assert!(d.contains("l4  [reporter]"));
    }
}
