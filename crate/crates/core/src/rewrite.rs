//! Deterministic routing-heuristic rewrite applied to architect plans.
//!
//! Four heuristics run once, in a fixed order:
//!
//! 1. `storm_track_first`: when a named storm is detected, the storm-track
//!    specialist must occupy a layer of its own ahead of the first layer
//!    holding any other observation specialist.
//! 2. `split_mixed_classes`: a layer mixing data classes is split into
//!    consecutive single-class layers (observation, hypothetical, forecast).
//! 3. `complementary_hwm`: for unscoped surge queries, the high-water-mark
//!    specialist joins the gauge specialist's layer.
//! 4. `stage_basemap`: the basemap specialist joins the layer of an
//!    image-producing forecast specialist.
//!
//! The rewrite only inserts, splits or moves specialists; it never drops one.
//! Its output is a fixed point: rewriting again changes nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::QueryFeatures;
use crate::plan::{validate_plan, LayerSpec, PlanSpec, TrackSpec, Violation};
use crate::registry::{DataClass, Registry};

/// Specialist ids the heuristics refer to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicIds {
    pub storm_track: String,
    pub gauge: String,
    pub high_water_marks: String,
    pub forecast_image: String,
    pub basemap: String,
}

impl Default for HeuristicIds {
    fn default() -> Self {
        Self {
            storm_track: "nhc".into(),
            gauge: "noaa_coops".into(),
            high_water_marks: "usgs".into(),
            forecast_image: "stofs".into(),
            basemap: "osm".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    StormTrackFirst,
    SplitMixedClasses,
    ComplementaryHwm,
    StageBasemap,
}

impl std::fmt::Display for Heuristic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Heuristic::StormTrackFirst => "storm_track_first",
            Heuristic::SplitMixedClasses => "split_mixed_classes",
            Heuristic::ComplementaryHwm => "complementary_hwm",
            Heuristic::StageBasemap => "stage_basemap",
        })
    }
}

/// One entry of the rewrite log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteNote {
    pub heuristic: Heuristic,
    pub track: usize,
    pub applied: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteOutcome {
    pub plan: PlanSpec,
    pub log: Vec<RewriteNote>,
}

impl RewriteOutcome {
    /// Names of the heuristics that changed the plan, in application order.
    pub fn applied(&self) -> Vec<Heuristic> {
        let mut out: Vec<Heuristic> = Vec::new();
        for note in self.log.iter().filter(|n| n.applied) {
            if !out.contains(&note.heuristic) {
                out.push(note.heuristic);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("plan does not validate: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Violation>),
    #[error("heuristic {heuristic} needs specialist {agent}, which is not in the registry")]
    MissingSpecialist { heuristic: Heuristic, agent: String },
    #[error("rewrite produced an invalid plan: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidOutput(Vec<Violation>),
}

pub struct Rewriter<'a> {
    registry: &'a Registry,
    ids: HeuristicIds,
}

impl<'a> Rewriter<'a> {
    pub fn new(registry: &'a Registry) -> Self {
        Self::with_ids(registry, HeuristicIds::default())
    }

    pub fn with_ids(registry: &'a Registry, ids: HeuristicIds) -> Self {
        Self { registry, ids }
    }

    fn class_of(&self, id: &str) -> DataClass {
        self.registry
            .get(id)
            .map(|a| a.data_class)
            .unwrap_or(DataClass::None)
    }

    fn require(&self, heuristic: Heuristic, id: &str) -> Result<(), RewriteError> {
        match self.registry.get(id) {
            Some(a) if a.is_specialist() => Ok(()),
            _ => Err(RewriteError::MissingSpecialist {
                heuristic,
                agent: id.to_string(),
            }),
        }
    }

    pub fn rewrite(
        &self,
        plan: &PlanSpec,
        features: &QueryFeatures,
    ) -> Result<RewriteOutcome, RewriteError> {
        let violations = validate_plan(plan, self.registry);
        if !violations.is_empty() {
            return Err(RewriteError::InvalidPlan(violations));
        }

        let mut log = Vec::new();
        let mut tracks = Vec::with_capacity(plan.tracks.len());
        for (t, track) in plan.tracks.iter().enumerate() {
            let mut layers = track.layers.clone();
            self.storm_track_first(t, &mut layers, features, &mut log)?;
            self.split_mixed_classes(t, &mut layers, &mut log);
            self.complementary_hwm(t, &mut layers, features, &mut log)?;
            self.stage_basemap(t, &mut layers, &mut log)?;
            tracks.push(TrackSpec {
                goal_text: track.goal_text.clone(),
                layers,
            });
        }

        let out = PlanSpec {
            topology: plan.topology,
            tracks,
            rationale: plan.rationale.clone(),
        };
        let violations = validate_plan(&out, self.registry);
        if !violations.is_empty() {
            return Err(RewriteError::InvalidOutput(violations));
        }
        Ok(RewriteOutcome { plan: out, log })
    }

    fn storm_track_first(
        &self,
        t: usize,
        layers: &mut Vec<LayerSpec>,
        features: &QueryFeatures,
        log: &mut Vec<RewriteNote>,
    ) -> Result<(), RewriteError> {
        if !features.named_storm_detected {
            return Ok(());
        }
        let nhc = self.ids.storm_track.as_str();
        let is_other_obs = |id: &String| id != nhc && self.class_of(id) == DataClass::Observation;
        let Some(first_obs) = layers.iter().position(|l| l.agent_ids.iter().any(is_other_obs))
        else {
            return Ok(());
        };
        if layers[..first_obs].iter().any(|l| l.contains(nhc)) {
            return Ok(());
        }
        self.require(Heuristic::StormTrackFirst, nhc)?;

        let detail;
        if layers[first_obs].contains(nhc) {
            layers[first_obs].agent_ids.retain(|a| a != nhc);
            detail = format!("split {nhc} out of layer {first_obs}");
        } else if let Some(later) = layers.iter().position(|l| l.contains(nhc)) {
            layers[later].agent_ids.retain(|a| a != nhc);
            if layers[later].is_empty() {
                layers.remove(later);
            }
            detail = format!("moved {nhc} from layer {later} ahead of layer {first_obs}");
        } else {
            detail = format!("inserted [{nhc}] before layer {first_obs}");
        }
        layers.insert(first_obs, LayerSpec::new([nhc]));
        log.push(RewriteNote {
            heuristic: Heuristic::StormTrackFirst,
            track: t,
            applied: true,
            detail,
        });
        Ok(())
    }

    fn split_mixed_classes(&self, t: usize, layers: &mut Vec<LayerSpec>, log: &mut Vec<RewriteNote>) {
        let mut out = Vec::with_capacity(layers.len());
        for (l, layer) in layers.drain(..).enumerate() {
            let mut classes: Vec<DataClass> =
                layer.agent_ids.iter().map(|a| self.class_of(a)).collect();
            classes.sort();
            classes.dedup();
            if classes.len() <= 1 {
                out.push(layer);
                continue;
            }
            for class in &classes {
                out.push(LayerSpec {
                    agent_ids: layer
                        .agent_ids
                        .iter()
                        .filter(|a| self.class_of(a) == *class)
                        .cloned()
                        .collect(),
                });
            }
            log.push(RewriteNote {
                heuristic: Heuristic::SplitMixedClasses,
                track: t,
                applied: true,
                detail: format!(
                    "split layer {l} into {}",
                    classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" -> ")
                ),
            });
        }
        *layers = out;
    }

    fn complementary_hwm(
        &self,
        t: usize,
        layers: &mut [LayerSpec],
        features: &QueryFeatures,
        log: &mut Vec<RewriteNote>,
    ) -> Result<(), RewriteError> {
        if !features.surge_requested {
            return Ok(());
        }
        let gauge = self.ids.gauge.as_str();
        let hwm = self.ids.high_water_marks.as_str();
        let Some(l) = layers.iter().position(|layer| layer.contains(gauge)) else {
            return Ok(());
        };
        if layers.iter().any(|layer| layer.contains(hwm)) {
            return Ok(());
        }
        if features.location_scoped {
            log.push(RewriteNote {
                heuristic: Heuristic::ComplementaryHwm,
                track: t,
                applied: false,
                detail: format!("query scoped to gauge data; {hwm} not added"),
            });
            return Ok(());
        }
        self.require(Heuristic::ComplementaryHwm, hwm)?;
        layers[l].agent_ids.push(hwm.to_string());
        log.push(RewriteNote {
            heuristic: Heuristic::ComplementaryHwm,
            track: t,
            applied: true,
            detail: format!("added {hwm} alongside {gauge} in layer {l}"),
        });
        Ok(())
    }

    fn stage_basemap(
        &self,
        t: usize,
        layers: &mut [LayerSpec],
        log: &mut Vec<RewriteNote>,
    ) -> Result<(), RewriteError> {
        let stofs = self.ids.forecast_image.as_str();
        let osm = self.ids.basemap.as_str();
        let image_forecast = self
            .registry
            .get(stofs)
            .map(|a| a.produces_images && a.data_class == DataClass::Forecast)
            .unwrap_or(false);
        if !image_forecast {
            return Ok(());
        }
        let Some(l) = layers.iter().position(|layer| layer.contains(stofs)) else {
            return Ok(());
        };
        if layers.iter().any(|layer| layer.contains(osm)) {
            return Ok(());
        }
        self.require(Heuristic::StageBasemap, osm)?;
        layers[l].agent_ids.push(osm.to_string());
        log.push(RewriteNote {
            heuristic: Heuristic::StageBasemap,
            track: t,
            applied: true,
            detail: format!("staged {osm} with {stofs} in layer {l}"),
        });
        Ok(())
    }
}

/// Applies the heuristics with default ids.
pub fn rewrite_with_heuristics(
    plan: &PlanSpec,
    features: &QueryFeatures,
    registry: &Registry,
) -> Result<RewriteOutcome, RewriteError> {
    Rewriter::new(registry).rewrite(plan, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_features;

    fn layers(plan: &PlanSpec) -> Vec<Vec<String>> {
        plan.tracks[0].layers.iter().map(|l| l.agent_ids.clone()).collect()
    }

    fn ian() -> QueryFeatures {
        extract_features("What was the observed storm surge in Fort Myers during the Hurricane Ian event?")
    }

    #[test]
    fn ian_surge_gets_storm_track_and_hwm() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["noaa_coops"])]);
        let out = rewrite_with_heuristics(&plan, &ian(), &reg).unwrap();
        assert_eq!(layers(&out.plan), vec![vec!["nhc"], vec!["noaa_coops", "usgs"]]);
        assert_eq!(
            out.applied(),
            vec![Heuristic::StormTrackFirst, Heuristic::ComplementaryHwm]
        );
    }

    #[test]
    fn rewritten_plan_is_a_fixed_point() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear(
            "g",
            vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops", "usgs"])],
        );
        let out = rewrite_with_heuristics(&plan, &ian(), &reg).unwrap();
        assert_eq!(out.plan, plan);
        assert!(out.applied().is_empty());
    }

    #[test]
    fn mixed_layer_is_split_then_expanded() {
        // Worked by hand: H1 off (no named storm), H2 splits observation from
        // forecast, H3 adds usgs to the gauge layer, H4 stages osm with stofs.
        let reg = Registry::builtin();
        let features = QueryFeatures {
            surge_requested: true,
            ..QueryFeatures::default()
        };
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["noaa_coops", "stofs"])]);
        let out = rewrite_with_heuristics(&plan, &features, &reg).unwrap();
        assert_eq!(
            layers(&out.plan),
            vec![vec!["noaa_coops", "usgs"], vec!["stofs", "osm"]]
        );

        let no_surge = rewrite_with_heuristics(&plan, &QueryFeatures::default(), &reg).unwrap();
        assert_eq!(layers(&no_surge.plan), vec![vec!["noaa_coops"], vec!["stofs", "osm"]]);
    }

    #[test]
    fn storm_track_is_split_or_moved_forward() {
        let reg = Registry::builtin();
        let f = ian();
        let same = PlanSpec::linear("g", vec![LayerSpec::new(["noaa_coops", "nhc"])]);
        let out = rewrite_with_heuristics(&same, &f, &reg).unwrap();
        assert_eq!(layers(&out.plan), vec![vec!["nhc"], vec!["noaa_coops", "usgs"]]);

        let later = PlanSpec::linear(
            "g",
            vec![LayerSpec::new(["usgs"]), LayerSpec::new(["nhc", "fema"])],
        );
        let out = rewrite_with_heuristics(&later, &f, &reg).unwrap();
        assert_eq!(layers(&out.plan), vec![vec!["nhc"], vec!["usgs"], vec!["fema"]]);
    }

    #[test]
    fn gauge_scoped_query_skips_hwm_and_logs_it() {
        let reg = Registry::builtin();
        let f = extract_features("Ike 2008 --- observed surge height at Galveston tide gauge?");
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops"])]);
        let out = rewrite_with_heuristics(&plan, &f, &reg).unwrap();
        assert_eq!(out.plan, plan);
        assert_eq!(out.log.len(), 1);
        assert!(!out.log[0].applied);
        assert_eq!(out.log[0].heuristic, Heuristic::ComplementaryHwm);
    }

    #[test]
    fn missing_heuristic_specialist_aborts_with_name() {
        let mut manifest: serde_json::Value =
            serde_json::from_str(&Registry::builtin().to_json()).unwrap();
        let agents = manifest["agents"].as_array_mut().unwrap();
        agents.retain(|a| a["id"] != "usgs");
        let reg = Registry::from_json(&manifest.to_string()).unwrap();
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["nhc"]), LayerSpec::new(["noaa_coops"])]);
        let err = rewrite_with_heuristics(&plan, &ian(), &reg).unwrap_err();
        assert_eq!(
            err,
            RewriteError::MissingSpecialist {
                heuristic: Heuristic::ComplementaryHwm,
                agent: "usgs".into()
            }
        );
    }

    #[test]
    fn invalid_input_is_rejected() {
        let reg = Registry::builtin();
        let plan = PlanSpec::linear("g", vec![LayerSpec::new(["graph_architect"])]);
        assert!(matches!(
            rewrite_with_heuristics(&plan, &QueryFeatures::default(), &reg),
            Err(RewriteError::InvalidPlan(_))
        ));
    }
}
