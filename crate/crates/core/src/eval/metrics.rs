//! The four scoring metrics and their aggregation.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::Topology;

pub const FEET_TO_METERS: f64 = 0.3048;
pub const PASS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Surge,
    Count,
    Category,
    FloodZone,
    Station,
    Multi,
}

/// Inclusive interval of accepted values; an open upper end means "at least".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Band {
    fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else {
            match self.hi {
                Some(hi) if v > hi => v - hi,
                _ => 0.0,
            }
        }
    }
}

/// Authoritative reference value for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    Surge {
        meters: f64,
        /// Reported as a range; candidates inside it score 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        band: Option<Band>,
    },
    Count {
        value: u64,
    },
    Category {
        label: String,
    },
    FloodZone {
        zones: Vec<String>,
    },
    Station {
        station: String,
    },
    Multi {
        parts: Vec<Reference>,
    },
}

impl Reference {
    pub fn kind(&self) -> QuantityKind {
        match self {
            Reference::Surge { .. } => QuantityKind::Surge,
            Reference::Count { .. } => QuantityKind::Count,
            Reference::Category { .. } => QuantityKind::Category,
            Reference::FloodZone { .. } => QuantityKind::FloodZone,
            Reference::Station { .. } => QuantityKind::Station,
            Reference::Multi { .. } => QuantityKind::Multi,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Reference::Surge { meters, band } => {
                if !(meters.is_finite() && *meters > 0.0) {
                    return Err(format!("surge reference must be positive, got {meters}"));
                }
                if let Some(b) = band {
                    if b.hi.is_some_and(|hi| hi < b.lo) {
                        return Err("surge band has hi < lo".into());
                    }
                }
                Ok(())
            }
            Reference::Count { value } if *value == 0 => Err("count reference must be positive".into()),
            Reference::Category { label } if parse_category(label).is_none() => {
                Err(format!("unrecognized category label {label:?}"))
            }
            Reference::FloodZone { zones } if zones.is_empty() => Err("flood-zone reference is empty".into()),
            Reference::Station { station } if station.is_empty() => Err("station reference is empty".into()),
            Reference::Multi { parts } => {
                if parts.len() < 2 {
                    return Err("multi reference needs at least two parts".into());
                }
                parts.iter().try_for_each(Reference::validate)
            }
            _ => Ok(()),
        }
    }

    /// Kinds to extract from an answer.
    pub fn leaf_kinds(&self) -> BTreeSet<QuantityKind> {
        match self {
            Reference::Multi { parts } => parts.iter().flat_map(|p| p.leaf_kinds()).collect(),
            other => [other.kind()].into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityCandidate {
    pub value: f64,
    pub unit: String,
    /// Meters for lengths, the raw value for counts.
    pub normalized: f64,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Candidate {
    Length(QuantityCandidate),
    Count(QuantityCandidate),
    Category { label: String, span: (usize, usize) },
    Zone { code: String, span: (usize, usize) },
    Station { id: String, span: (usize, usize) },
}

impl Candidate {
    pub fn kind(&self) -> QuantityKind {
        match self {
            Candidate::Length(_) => QuantityKind::Surge,
            Candidate::Count(_) => QuantityKind::Count,
            Candidate::Category { .. } => QuantityKind::Category,
            Candidate::Zone { .. } => QuantityKind::FloodZone,
            Candidate::Station { .. } => QuantityKind::Station,
        }
    }

    fn start(&self) -> usize {
        match self {
            Candidate::Length(q) | Candidate::Count(q) => q.span.0,
            Candidate::Category { span, .. } | Candidate::Zone { span, .. } | Candidate::Station { span, .. } => span.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("candidate kind {found:?} does not match reference kind {expected:?}")]
    KindMismatch { expected: QuantityKind, found: QuantityKind },
    #[error("expected agent set is empty")]
    EmptyExpected,
    #[error("attribution rubric is empty")]
    EmptyRubric,
    #[error("rubric component {name}: {message}")]
    BadPattern { name: String, message: String },
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("metric pattern"))
}

fn length_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(
        &RE,
        r"(?i)\b(\d+(?:\.\d+)?)(?:\s*(?:-|–|—|to)\s*(\d+(?:\.\d+)?))?\s*(meters|meter|metres|metre|m|feet|foot|ft|centimeters|cm|inches)\b",
    )
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\d+(?:[.,]\d+)*")
}

fn category_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"(?i)\bcat(?:egory)?\.?\s*([1-5])\b")
}

fn zone_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\b(VE|AE|AO|AH|A99|AR|X)\b|(?i:\bzones?\s+)(A|V|D)\b|\b(A|V|D)(?i:\s+zones?\b)")
}

fn station_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\b(\d{7})\b")
}

fn unit_factor(unit: &str) -> Option<f64> {
    match unit.to_ascii_lowercase().as_str() {
        "m" | "meter" | "meters" | "metre" | "metres" => Some(1.0),
        "ft" | "foot" | "feet" => Some(FEET_TO_METERS),
        _ => None,
    }
}

/// Normalized "Cat N" label for any recognized spelling.
pub fn parse_category(text: &str) -> Option<String> {
    category_pattern().captures(text).map(|c| format!("Cat {}", &c[1]))
}

/// Extracts scoreable quantities of `kind` from an answer, in text order.
pub fn extract_quantities(text: &str, kind: QuantityKind) -> Vec<Candidate> {
    let mut out = match kind {
        QuantityKind::Surge => extract_lengths(text),
        QuantityKind::Count => extract_counts(text),
        QuantityKind::Category => category_pattern()
            .captures_iter(text)
            .map(|c| {
                let m = c.get(0).expect("match");
                Candidate::Category { label: format!("Cat {}", &c[1]), span: (m.start(), m.end()) }
            })
            .collect(),
        QuantityKind::FloodZone => zone_pattern()
            .captures_iter(text)
            .filter_map(|c| {
                let m = c.get(1).or_else(|| c.get(2)).or_else(|| c.get(3))?;
                Some(Candidate::Zone { code: m.as_str().to_string(), span: (m.start(), m.end()) })
            })
            .collect(),
        QuantityKind::Station => station_pattern()
            .captures_iter(text)
            .map(|c| {
                let m = c.get(1).expect("group");
                Candidate::Station { id: m.as_str().to_string(), span: (m.start(), m.end()) }
            })
            .collect(),
        QuantityKind::Multi => {
            let mut all = Vec::new();
            for k in [QuantityKind::Surge, QuantityKind::Count, QuantityKind::Category, QuantityKind::FloodZone, QuantityKind::Station] {
                all.extend(extract_quantities(text, k));
            }
            all
        }
    };
    out.sort_by_key(Candidate::start);
    out
}

fn extract_lengths(text: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    for c in length_pattern().captures_iter(text) {
        let unit = c[3].to_string();
        let Some(factor) = unit_factor(&unit) else {
            tracing::warn!(unit = %unit, span = %&c[0], "length unit not normalized; candidate rejected");
            continue;
        };
        for g in [1, 2] {
            if let Some(m) = c.get(g) {
                let value: f64 = m.as_str().parse().unwrap_or(f64::NAN);
                let normalized = value * factor;
                if normalized.is_finite() {
                    out.push(Candidate::Length(QuantityCandidate {
                        value,
                        unit: unit.clone(),
                        normalized,
                        span: (m.start(), c.get(0).expect("match").end()),
                    }));
                }
            }
        }
    }
    out
}

fn extract_counts(text: &str) -> Vec<Candidate> {
    number_pattern()
        .find_iter(text)
        .filter(|m| !m.as_str().contains(['.', ',']))
        .filter(|m| {
            // Digits glued to letters (NAVD88, AL092008) are identifiers.
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            !before.is_some_and(|ch| ch.is_alphanumeric()) && !after.is_some_and(|ch| ch.is_alphanumeric())
        })
        .filter_map(|m| {
            let value: f64 = m.as_str().parse().ok()?;
            Some(Candidate::Count(QuantityCandidate {
                value,
                unit: String::new(),
                normalized: value,
                span: (m.start(), m.end()),
            }))
        })
        .collect()
}

/// `max(0, 1 - |ŷ - y| / y)`.
pub fn relative_closeness(y_hat: f64, y: f64) -> f64 {
    if y <= 0.0 || !y_hat.is_finite() {
        return 0.0;
    }
    (1.0 - (y_hat - y).abs() / y).max(0.0)
}

fn banded_closeness(y_hat: f64, y: f64, band: Option<&Band>) -> f64 {
    match band {
        Some(b) => {
            if !y_hat.is_finite() {
                return 0.0;
            }
            (1.0 - b.distance(y_hat) / y).max(0.0)
        }
        None => relative_closeness(y_hat, y),
    }
}

/// Scores the candidates against the reference. The closest candidate wins;
/// ties keep the first span.
pub fn score_factual_precision(candidates: &[Candidate], truth: &Reference) -> Result<f64, MetricError> {
    if let Reference::Multi { parts } = truth {
        let mut total = 0.0;
        for part in parts {
            let kind = part.kind();
            let own: Vec<Candidate> = if kind == QuantityKind::Multi {
                candidates.to_vec()
            } else {
                candidates.iter().filter(|c| c.kind() == kind).cloned().collect()
            };
            total += score_factual_precision(&own, part)?;
        }
        return Ok(total / parts.len() as f64);
    }
    let expected = truth.kind();
    if let Some(c) = candidates.iter().find(|c| c.kind() != expected) {
        return Err(MetricError::KindMismatch { expected, found: c.kind() });
    }
    let score = match truth {
        Reference::Surge { meters, band } => candidates
            .iter()
            .filter_map(|c| match c {
                Candidate::Length(q) => Some(banded_closeness(q.normalized, *meters, band.as_ref())),
                _ => None,
            })
            .fold(0.0, f64::max),
        Reference::Count { value } => candidates
            .iter()
            .filter_map(|c| match c {
                Candidate::Count(q) => Some(relative_closeness(q.normalized, *value as f64)),
                _ => None,
            })
            .fold(0.0, f64::max),
        Reference::Category { label } => {
            let want = parse_category(label);
            match candidates.first() {
                Some(Candidate::Category { label: got, .. }) if Some(got) == want.as_ref() => 1.0,
                _ => 0.0,
            }
        }
        Reference::FloodZone { zones } => {
            let found: BTreeSet<&str> = candidates
                .iter()
                .filter_map(|c| match c {
                    Candidate::Zone { code, .. } => Some(code.as_str()),
                    _ => None,
                })
                .collect();
            let extras: Vec<&&str> = found.iter().filter(|z| !zones.iter().any(|e| e == **z)).collect();
            if !extras.is_empty() {
                tracing::debug!(?extras, "flood-zone codes beyond the reference set are not penalized");
            }
            let hit = zones.iter().filter(|z| found.contains(z.as_str())).count();
            hit as f64 / zones.len() as f64
        }
        Reference::Station { station } => {
            let hit = candidates.iter().any(|c| matches!(c, Candidate::Station { id, .. } if id == station));
            if hit {
                1.0
            } else {
                0.0
            }
        }
        Reference::Multi { .. } => unreachable!("handled above"),
    };
    Ok(score)
}

/// Extracts and scores in one step.
pub fn factual_precision(answer: &str, truth: &Reference) -> f64 {
    let candidates = extract_quantities(answer, truth.kind());
    score_factual_precision(&candidates, truth).unwrap_or(0.0)
}

pub fn score_topology(selected: Topology, expected: Topology) -> f64 {
    if selected == expected {
        1.0
    } else {
        0.0
    }
}

pub fn score_agent_f1(selected: &BTreeSet<String>, expected: &BTreeSet<String>) -> Result<f64, MetricError> {
    if expected.is_empty() {
        return Err(MetricError::EmptyExpected);
    }
    let hit = selected.intersection(expected).count() as f64;
    let precision = if selected.is_empty() { 0.0 } else { hit / selected.len() as f64 };
    let recall = hit / expected.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricComponent {
    pub name: String,
    pub pattern: String,
}

impl RubricComponent {
    pub fn new(name: impl Into<String>, pattern: impl Into<String>) -> Self {
        Self { name: name.into(), pattern: pattern.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionDetail {
    pub score: f64,
    pub matched: Vec<String>,
    pub missing: Vec<String>,
}

/// Scores the rubric over the concatenation of every pipeline text.
pub fn score_source_attribution(texts: &[&str], rubric: &[RubricComponent]) -> Result<AttributionDetail, MetricError> {
    if rubric.is_empty() {
        return Err(MetricError::EmptyRubric);
    }
    let combined = texts.join("\n\n");
    let mut matched = Vec::new();
    let mut missing = Vec::new();
    for c in rubric {
        let re = Regex::new(&c.pattern).map_err(|e| MetricError::BadPattern { name: c.name.clone(), message: e.to_string() })?;
        if re.is_match(&combined) {
            matched.push(c.name.clone());
        } else {
            missing.push(c.name.clone());
        }
    }
    Ok(AttributionDetail { score: matched.len() as f64 / rubric.len() as f64, matched, missing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub factual_precision: f64,
    pub topology_selection: f64,
    pub agent_f1: f64,
    pub source_attribution: f64,
    pub overall: f64,
    /// Wall-clock seconds; excluded from byte-stable comparisons.
    pub latency_s: f64,
}

impl MetricScores {
    pub fn new(factual_precision: f64, topology_selection: f64, agent_f1: f64, source_attribution: f64, latency_s: f64) -> Self {
        Self {
            factual_precision,
            topology_selection,
            agent_f1,
            source_attribution,
            overall: overall([factual_precision, topology_selection, agent_f1, source_attribution]),
            latency_s,
        }
    }

    pub fn passed(&self) -> bool {
        self.overall >= PASS_THRESHOLD
    }

    pub fn metric_values(&self) -> [f64; 4] {
        [self.factual_precision, self.topology_selection, self.agent_f1, self.source_attribution]
    }
}

/// Unweighted mean of the four metric values.
pub fn overall(values: [f64; 4]) -> f64 {
    values.iter().sum::<f64>() / 4.0
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn surge(y: f64) -> Reference {
        Reference::Surge { meters: y, band: None }
    }

    #[test]
    fn extracts_lengths_from_reporter_prose() {
        let text = "Peak storm surge of 2.209 m was recorded at 8725520; HWMs up to 4.20 m NAVD88, winds 130 mph.";
        let got: Vec<f64> = extract_quantities(text, QuantityKind::Surge)
            .iter()
            .map(|c| match c {
                Candidate::Length(q) => q.normalized,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, vec![2.209, 4.20]);
        assert!(extract_quantities("", QuantityKind::Surge).is_empty());
    }

    #[test]
    fn feet_are_converted_and_ranges_split() {
        match &extract_quantities("Sabine Pass North recorded 12.79 ft", QuantityKind::Surge)[0] {
            Candidate::Length(q) => assert!((q.normalized - 3.898392).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        let r = extract_quantities("HWMs of 10–15 ft and 30 cm of rain", QuantityKind::Surge);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn closest_candidate_sets_the_score() {
        let c = extract_quantities("2.30 m and 4.20 m", QuantityKind::Surge);
        let s = score_factual_precision(&c, &surge(2.44)).unwrap();
        assert!((s - 0.942_622_950_8).abs() < 1e-6, "{s}");
        let exact = extract_quantities("2.44 m", QuantityKind::Surge);
        assert_eq!(score_factual_precision(&exact, &surge(2.44)).unwrap(), 1.0);
        assert_eq!(score_factual_precision(&[], &surge(2.44)).unwrap(), 0.0);
        assert_eq!(factual_precision("about 9 m", &surge(2.44)), 0.0);
    }

    #[test]
    fn band_scores_inside_as_exact() {
        let truth = Reference::Surge { meters: 3.81, band: Some(Band { lo: 3.048, hi: Some(4.572) }) };
        assert_eq!(factual_precision("HWMs reached 12 ft", &truth), 1.0);
        let open = Reference::Surge { meters: 2.743, band: Some(Band { lo: 2.743, hi: None }) };
        assert_eq!(factual_precision("over 11 ft", &open), 1.0);
    }

    #[test]
    fn category_uses_first_label() {
        let truth = Reference::Category { label: "Cat 4".into() };
        assert_eq!(factual_precision("Harvey was a Category 4 hurricane", &truth), 1.0);
        assert_eq!(factual_precision("Cat 5", &truth), 0.0);
        assert_eq!(factual_precision("Category 4, later Category 1", &truth), 1.0);
        assert_eq!(parse_category("cat. 3"), Some("Cat 3".into()));
    }

    #[test]
    fn flood_zone_fraction_ignores_extras() {
        let truth = Reference::FloodZone { zones: vec!["AE".into(), "VE".into()] };
        assert_eq!(factual_precision("Miami Beach lies in Zone AE.", &truth), 0.5);
        assert_eq!(factual_precision("Zones AE, VE and X apply", &truth), 1.0);
        let a = Reference::FloodZone { zones: vec!["A".into()] };
        assert_eq!(factual_precision("mapped as Zone A", &a), 1.0);
        assert_eq!(factual_precision("A storm passed", &a), 0.0);
    }

    #[test]
    fn counts_skip_decimals_and_identifiers() {
        let c = extract_quantities("28 named storms in 2005 (HURDAT2), 2.5 m", QuantityKind::Count);
        let v: Vec<f64> = c
            .iter()
            .map(|c| match c {
                Candidate::Count(q) => q.value,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(v, vec![28.0, 2005.0]);
        assert_eq!(factual_precision("there were 27", &Reference::Count { value: 28 }), 1.0 - 1.0 / 28.0);
    }

    #[test]
    fn multi_averages_parts() {
        let truth = Reference::Multi {
            parts: vec![surge(2.44), Reference::FloodZone { zones: vec!["AE".into(), "VE".into()] }],
        };
        assert_eq!(factual_precision("Surge 2.44 m; Miami Beach is Zone AE", &truth), 0.75);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let c = extract_quantities("Cat 4", QuantityKind::Category);
        assert!(matches!(score_factual_precision(&c, &surge(1.0)), Err(MetricError::KindMismatch { .. })));
    }

    #[test]
    fn agent_f1_oracles() {
        assert_eq!(score_agent_f1(&set(&["nhc", "noaa_coops", "usgs"]), &set(&["nhc", "noaa_coops"])).unwrap(), 0.8);
        assert_eq!(score_agent_f1(&set(&["fema"]), &set(&["fema"])).unwrap(), 1.0);
        assert_eq!(score_agent_f1(&set(&[]), &set(&["nhc"])).unwrap(), 0.0);
        assert_eq!(score_agent_f1(&set(&["nhc"]), &set(&[])), Err(MetricError::EmptyExpected));
    }

    fn surge_rubric() -> Vec<RubricComponent> {
        vec![
            RubricComponent::new("station_id", r"\b8771450\b"),
            RubricComponent::new("vertical_datum", r"(?i)\bNAVD ?88\b|\bMHHW\b"),
            RubricComponent::new("temporal", r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2})?\s*(?:Z|UTC)"),
            RubricComponent::new("source", r"(?i)NOAA CO-OPS"),
        ]
    }

    #[test]
    fn attribution_is_fraction_over_combined_texts() {
        let full = score_source_attribution(
            &["Station 8771450 (NOAA CO-OPS)", "", "peak 2008-09-13 07:00 UTC relative to NAVD88"],
            &surge_rubric(),
        )
        .unwrap();
        assert_eq!(full.score, 1.0);
        let half = score_source_attribution(&["8771450 per NOAA CO-OPS"], &surge_rubric()).unwrap();
        assert_eq!(half.score, 0.5);
        assert_eq!(half.missing, vec!["vertical_datum", "temporal"]);
        let count = vec![
            RubricComponent::new("database", r"(?i)\bHURDAT2?\b"),
            RubricComponent::new("year", r"\b2005\b"),
        ];
        assert_eq!(score_source_attribution(&["per HURDAT2"], &count).unwrap().score, 0.5);
        assert_eq!(score_source_attribution(&["x"], &[]), Err(MetricError::EmptyRubric));
    }

    #[test]
    fn overall_means_match_reported_rows() {
        assert!((overall([99.5, 100.0, 100.0, 100.0]) - 99.875).abs() < 1e-9);
        assert!((overall([93.2, 100.0, 92.7, 88.5]) - 93.6).abs() < 1e-9);
        assert!((overall([82.2, 100.0, 88.0, 70.0]) - 85.05).abs() < 1e-9);
        assert!(MetricScores::new(0.0, 1.0, 1.0, 0.0, 0.0).passed());
        assert!(!MetricScores::new(0.0, 1.0, 0.5, 0.0, 0.0).passed());
    }

    #[test]
    fn population_std_of_identical_values_is_zero() {
        assert_eq!(population_std(&[0.9, 0.9, 0.9]), 0.0);
        assert!((population_std(&[1.0, 0.0]) - 0.5).abs() < 1e-12);
    }
}
