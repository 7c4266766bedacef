//! Plan generators and the LEG property checks shared by the property suite
//! and the acceptance target.

#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use stormleg_core::features::QueryFeatures;
use stormleg_core::leg::{compile_leg, expected_node_count, StageKind};
use stormleg_core::plan::{validate_plan, LayerSpec, PlanSpec, Topology, TrackSpec};
use stormleg_core::registry::{DataClass, Registry};
use stormleg_core::rewrite::rewrite_with_heuristics;

pub const SPECIALISTS: [&str; 6] = ["nhc", "noaa_coops", "usgs", "fema", "stofs", "osm"];

fn layer() -> impl Strategy<Value = LayerSpec> {
    (1u8..64)
        .prop_map(|mask| {
            SPECIALISTS
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, a)| a.to_string())
                .collect::<Vec<_>>()
        })
        .prop_shuffle()
        .prop_map(LayerSpec::new)
}

fn track() -> impl Strategy<Value = TrackSpec> {
    (prop::collection::vec(layer(), 1..5), "[a-z ]{0,12}")
        .prop_map(|(layers, goal_text)| TrackSpec { goal_text, layers })
}

/// Plans that pass validation: 1 to 4 tracks of 1 to 4 non-empty layers.
pub fn plans() -> impl Strategy<Value = PlanSpec> {
    prop::collection::vec(track(), 1..5).prop_map(|tracks| PlanSpec {
        topology: if tracks.len() == 1 { Topology::Linear } else { Topology::ParallelTracks },
        tracks,
        rationale: None,
    })
}

pub fn features() -> impl Strategy<Value = QueryFeatures> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(named, surge, scoped)| QueryFeatures {
        named_storm_detected: named,
        surge_requested: surge,
        location_scoped: scoped,
        ..QueryFeatures::default()
    })
}

fn class_of(reg: &Registry, id: &str) -> DataClass {
    reg.get(id).map(|a| a.data_class).unwrap_or(DataClass::None)
}

/// Every property a rewritten and compiled plan must satisfy.
pub fn check_plan(plan: &PlanSpec, feats: &QueryFeatures, reg: &Registry) -> Result<(), String> {
    let once = rewrite_with_heuristics(plan, feats, reg).map_err(|e| format!("rewrite failed: {e}"))?;
    let p = &once.plan;

    for (t, track) in p.tracks.iter().enumerate() {
        for (l, layer) in track.layers.iter().enumerate() {
            let classes: BTreeSet<DataClass> = layer.agent_ids.iter().map(|a| class_of(reg, a)).collect();
            if classes.len() > 1 {
                return Err(format!("track {t} layer {l} mixes classes {classes:?}"));
            }
        }
    }

    let twice = rewrite_with_heuristics(p, feats, reg).map_err(|e| format!("second rewrite failed: {e}"))?;
    if &twice.plan != p {
        return Err(format!("rewrite is not idempotent:\n{}\n{}", p.to_json(), twice.plan.to_json()));
    }

    let leg = compile_leg(p, reg).map_err(|e| format!("compile failed: {e}"))?;
    let violations = leg.invariant_violations(reg);
    if !violations.is_empty() {
        return Err(format!("invariants: {violations:?}"));
    }
    if leg.node_count() != expected_node_count(p, reg) {
        return Err(format!("{} nodes, expected {}", leg.node_count(), expected_node_count(p, reg)));
    }
    let architect = reg.role(stormleg_core::registry::Role::Architect);
    if leg.nodes().iter().any(|n| n.agent_id == architect) {
        return Err("architect scheduled".into());
    }

    for (t, track) in leg.tracks.iter().enumerate() {
        for (s, stage) in track.stages.iter().enumerate() {
            if stage.kind != StageKind::Specialists || stage.nodes.len() < 2 {
                continue;
            }
            let follower = track.stages[s + 1..].iter().find(|x| x.kind != StageKind::Image);
            if follower.map(|x| x.kind) != Some(StageKind::Consolidator) {
                return Err(format!("track {t} stage {s}: multi-specialist layer without consolidator"));
            }
        }
    }
    Ok(())
}

/// Injecting the architect anywhere must make the plan unschedulable.
pub fn check_architect_rejected(plan: &PlanSpec, track: usize, layer: usize, reg: &Registry) -> Result<(), String> {
    let mut bad = plan.clone();
    let t = track % bad.tracks.len();
    let l = layer % bad.tracks[t].layers.len();
    let architect = reg.role(stormleg_core::registry::Role::Architect).to_string();
    bad.tracks[t].layers[l].agent_ids.push(architect);
    if !validate_plan(&bad, reg).iter().any(|v| v.message == "architect not schedulable") {
        return Err("validation accepted the architect".into());
    }
    if compile_leg(&bad, reg).is_ok() {
        return Err("compiled a plan that schedules the architect".into());
    }
    if rewrite_with_heuristics(&bad, &QueryFeatures::default(), reg).is_ok() {
        return Err("rewrote a plan that schedules the architect".into());
    }
    Ok(())
}
