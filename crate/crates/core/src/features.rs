//! Deterministic query features that drive the routing-heuristic rewrite.
//!
//! Detection is table-driven: every feature is a list of regular expressions
//! loaded from configuration, with defaults bundled in `data/patterns.json`.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::DataClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub named_storm_detected: bool,
    pub surge_requested: bool,
    /// The query restricts itself to gauge data (e.g. "tide gauge").
    pub location_scoped: bool,
    pub data_classes_requested: BTreeSet<DataClass>,
    pub image_specialist_requested: bool,
    pub sub_question_count: usize,
}

impl Default for QueryFeatures {
    fn default() -> Self {
        Self {
            named_storm_detected: false,
            surge_requested: false,
            location_scoped: false,
            data_classes_requested: BTreeSet::new(),
            image_specialist_requested: false,
            sub_question_count: 1,
        }
    }
}

/// Raw pattern table as stored in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternTableSpec {
    pub named_storm: Vec<String>,
    pub surge: Vec<String>,
    pub gauge_scoped: Vec<String>,
    pub observation: Vec<String>,
    pub hypothetical: Vec<String>,
    pub forecast: Vec<String>,
    pub image_specialist: Vec<String>,
    pub sub_question_split: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("pattern table is not valid JSON: {0}")]
    Parse(String),
    #[error("invalid pattern in {table}: {message}")]
    BadPattern { table: &'static str, message: String },
}

/// Compiled pattern table.
#[derive(Debug, Clone)]
pub struct PatternTable {
    spec: PatternTableSpec,
    named_storm: Vec<Regex>,
    surge: Vec<Regex>,
    gauge_scoped: Vec<Regex>,
    observation: Vec<Regex>,
    hypothetical: Vec<Regex>,
    forecast: Vec<Regex>,
    image_specialist: Vec<Regex>,
    sub_question_split: Vec<Regex>,
}

fn compile(table: &'static str, pats: &[String]) -> Result<Vec<Regex>, PatternError> {
    pats.iter()
        .map(|p| {
            Regex::new(p).map_err(|e| PatternError::BadPattern {
                table,
                message: e.to_string(),
            })
        })
        .collect()
}

impl PatternTable {
    pub fn new(spec: PatternTableSpec) -> Result<Self, PatternError> {
        Ok(Self {
            named_storm: compile("named_storm", &spec.named_storm)?,
            surge: compile("surge", &spec.surge)?,
            gauge_scoped: compile("gauge_scoped", &spec.gauge_scoped)?,
            observation: compile("observation", &spec.observation)?,
            hypothetical: compile("hypothetical", &spec.hypothetical)?,
            forecast: compile("forecast", &spec.forecast)?,
            image_specialist: compile("image_specialist", &spec.image_specialist)?,
            sub_question_split: compile("sub_question_split", &spec.sub_question_split)?,
            spec,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, PatternError> {
        let spec: PatternTableSpec =
            serde_json::from_str(text).map_err(|e| PatternError::Parse(e.to_string()))?;
        Self::new(spec)
    }

    pub fn spec(&self) -> &PatternTableSpec {
        &self.spec
    }

    pub fn extract(&self, query: &str) -> QueryFeatures {
        let any = |set: &[Regex]| set.iter().any(|r| r.is_match(query));

        let mut classes = BTreeSet::new();
        if any(&self.observation) {
            classes.insert(DataClass::Observation);
        }
        if any(&self.hypothetical) {
            classes.insert(DataClass::Hypothetical);
        }
        if any(&self.forecast) {
            classes.insert(DataClass::Forecast);
        }

        let splits: usize = self
            .sub_question_split
            .iter()
            .map(|r| r.find_iter(query).count())
            .sum();

        QueryFeatures {
            named_storm_detected: any(&self.named_storm),
            surge_requested: any(&self.surge),
            location_scoped: any(&self.gauge_scoped),
            data_classes_requested: classes,
            image_specialist_requested: any(&self.image_specialist),
            sub_question_count: 1 + splits,
        }
    }
}

impl Default for PatternTable {
    fn default() -> Self {
        Self::from_json(crate::data::DEFAULT_PATTERNS).expect("bundled pattern table is valid")
    }
}

/// Extracts features with the bundled default pattern table.
pub fn extract_features(query: &str) -> QueryFeatures {
    PatternTable::default().extract(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IAN: &str = "What was the observed storm surge in Fort Myers during the Hurricane Ian event?";
    const FOUR_PART: &str = "What is the observed storm surge from Hurricane Ian in Fort Myers, the total number of storms in HURDAT2 in 2011, the FEMA flood map guidance  for Miami for a category 3 storm, and the average total water level in Seattle in May 2025?";

    #[test]
    fn ian_surge_query() {
        let f = extract_features(IAN);
        assert!(f.named_storm_detected);
        assert!(f.surge_requested);
        assert!(!f.location_scoped);
        assert_eq!(f.sub_question_count, 1);
        assert!(f.data_classes_requested.contains(&DataClass::Observation));
    }

    #[test]
    fn empty_query() {
        assert_eq!(extract_features(""), QueryFeatures::default());
    }

    #[test]
    fn four_part_query_has_four_sub_questions() {
        let f = extract_features(FOUR_PART);
        assert_eq!(f.sub_question_count, 4);
        assert!(f.data_classes_requested.contains(&DataClass::Hypothetical));
    }

    #[test]
    fn place_name_commas_do_not_split() {
        for q in [
            "What was the peak storm surge at The Battery, New York during Hurricane Sandy in 2012?",
            "What are the FEMA flood zones for Charleston, South Carolina?",
            "Is Miami Beach in a special flood hazard area?  What zones does FEMA show?",
        ] {
            assert_eq!(extract_features(q).sub_question_count, 1, "{q}");
        }
    }

    #[test]
    fn conjunction_styles_split() {
        let q = "Two questions: (1) how high was the surge in Galveston from Ike 2008, and (2) what FEMA flood zones cover Miami Beach?";
        assert_eq!(extract_features(q).sub_question_count, 2);
        let q = "I need the Ike 2008 storm surge data for Galveston and also the FEMA flood zone map for Miami Beach.";
        assert_eq!(extract_features(q).sub_question_count, 2);
    }

    #[test]
    fn season_wording_is_not_a_named_storm() {
        let f = extract_features("How many named storms were in the 2005 Atlantic hurricane season?");
        assert!(!f.named_storm_detected);
        assert!(!f.surge_requested);
    }

    #[test]
    fn terse_gauge_query_is_scoped() {
        let f = extract_features("Ike 2008 --- observed surge height at Galveston tide gauge?");
        assert!(f.surge_requested);
        assert!(f.location_scoped);
        assert!(!f.named_storm_detected);
    }

    #[test]
    fn stofs_query_requests_image_specialist() {
        let f = extract_features("Source maximum total water levels produced by Hurricane Helene in Fort Myers from STOFS for forecast cycle right before US landfall.");
        assert!(f.image_specialist_requested);
        assert!(f.data_classes_requested.contains(&DataClass::Forecast));
    }

    #[test]
    fn bad_pattern_is_reported() {
        let mut spec = PatternTable::default().spec().clone();
        spec.surge = vec!["(".into()];
        assert!(matches!(
            PatternTable::new(spec),
            Err(PatternError::BadPattern { table: "surge", .. })
        ));
    }
}
