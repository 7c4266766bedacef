//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use proptest::test_runner::{Config, TestRunner};
use stormleg_core::eval::metrics::{
    extract_quantities, score_agent_f1, score_factual_precision, score_source_attribution, QuantityKind, Reference,
    RubricComponent,
};
use stormleg_core::eval::report::normalized_json;
use stormleg_core::eval::runner::FaultReport;
use stormleg_core::eval::{Corpus, Harness, PublishedResults, StressKind, StressReport, StressSuite, SUBSET7};
use stormleg_core::executor::AblationVariant;
use stormleg_core::leg::{static_leg, NodeKind, StageKind};
use stormleg_core::llm::Stage;
use stormleg_core::registry::Registry;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn metric_oracles() -> Verdict {
    let clock = Instant::now();
    let candidates = extract_quantities("gauge 2.30 m, marks 4.20 m", QuantityKind::Surge);
    let fp = score_factual_precision(&candidates, &Reference::Surge { meters: 2.44, band: None }).map_err(|e| e.to_string())?;
    ensure((fp - 0.942623).abs() <= 1e-6, format!("factual precision {fp:.6}, expected 0.942623"))?;

    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let f1 = score_agent_f1(&set(&["nhc", "noaa_coops", "usgs"]), &set(&["nhc", "noaa_coops"])).map_err(|e| e.to_string())?;
    ensure((f1 - 0.8).abs() < 1e-12, format!("agent F1 {f1}, expected 0.800"))?;

    let rubric = [
        RubricComponent::new("station_id", r"\b8771450\b"),
        RubricComponent::new("vertical_datum", r"NAVD ?88|MHHW"),
        RubricComponent::new("temporal_reference", r"\d{2}:\d{2} UTC"),
        RubricComponent::new("source_name", r"NOAA|USGS"),
    ];
    let attr = score_source_attribution(&["NOAA station 8771450 recorded 2.44 m"], &rubric).map_err(|e| e.to_string())?;
    ensure((attr.score - 0.5).abs() < 1e-12, format!("attribution {}, expected 0.5", attr.score))?;

    let elapsed = clock.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("precision {fp:.6}, F1 {f1:.3}, attribution {:.1}, {:.0} ms", attr.score, elapsed * 1e3))
}

fn table1_consistency() -> Verdict {
    let p = PublishedResults::builtin().map_err(|e| e.to_string())?;
    let checks = p.table1_consistency();
    ensure(checks.len() == 7, format!("{} columns, expected 7", checks.len()))?;
    let bad: Vec<_> = checks.iter().filter(|c| !c.within_tolerance).map(|c| c.column.clone()).collect();
    ensure(bad.is_empty(), format!("outside tolerance: {bad:?}"))?;
    let worst = checks.iter().map(|c| c.difference).fold(0.0, f64::max);
    let nu = checks.iter().find(|c| c.column == "Linear NHC→N+U").ok_or("missing Linear NHC→N+U column")?;
    Ok(format!(
        "7/7 columns within 0.05 (largest gap {worst:.3}; NHC→N+U mean {:.2} vs {:.1})",
        nu.mean_of_metrics, nu.reported_overall
    ))
}

fn cost_arithmetic() -> Verdict {
    let p = PublishedResults::builtin().map_err(|e| e.to_string())?;
    let t = p.stage_cost();
    ensure(t.total_usage.input_tokens == 504_100 && t.total_usage.output_tokens == 23_394,
        format!("stage tokens {}/{}", t.total_usage.input_tokens, t.total_usage.output_tokens))?;
    ensure((t.total_cost * 1000.0).round() / 1000.0 == 1.863, format!("total ${:.5}", t.total_cost))?;
    ensure((t.per_query_cost * 1000.0).round() / 1000.0 == 0.266, format!("per query ${:.5}", t.per_query_cost))?;
    let share = t.stages.iter().find(|s| s.stage == Stage::Specialist).map(|s| s.share_pct).unwrap_or(0.0);
    ensure((share - 92.2).abs() <= 0.05, format!("specialist share {share:.3}%"))?;
    ensure((t.per_query_tokens - 75_356.0).abs() <= 1.0, format!("tokens per query {:.2}", t.per_query_tokens))?;
    ensure(p.per_query_token_total() == t.total_usage.total(), "per-query tokens do not sum to the stage total")?;
    Ok(format!(
        "${:.5} total, ${:.5}/query, specialist share {share:.2}%, {:.1} tokens/query",
        t.total_cost, t.per_query_cost, t.per_query_tokens
    ))
}

async fn deterministic_e2e(corpus: &Corpus) -> Verdict {
    let clock = Instant::now();
    let subset = corpus.subset(&SUBSET7).map_err(|e| e.to_string())?;
    let reg = Arc::new(Registry::builtin());
    let first = Harness::scripted(reg.clone()).run_benchmark(&subset, AblationVariant::Full).await;
    let second = Harness::scripted(reg).run_benchmark(&subset, AblationVariant::Full).await;
    ensure(first.errors == 0, format!("{} errors", first.errors))?;
    for q in &first.queries {
        ensure(q.ledger_tool_records == q.dispatches,
            format!("{}: {} ledger records for {} dispatches", q.id, q.ledger_tool_records, q.dispatches))?;
    }
    ensure(normalized_json(&first) == normalized_json(&second), "reruns differ after normalization")?;
    let published = PublishedResults::builtin().map_err(|e| e.to_string())?;
    ensure(first.usage == published.stage_ledger(), "scripted usage differs from the published stage table")?;
    let elapsed = clock.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, format!("took {elapsed:.1} s"))?;
    let dispatches: usize = first.queries.iter().map(|q| q.dispatches).sum();
    Ok(format!(
        "7/7 queries, 0 errors, {dispatches} dispatches = {dispatches} ledger records, reruns identical, {:.2} s",
        elapsed
    ))
}

async fn ablation_contracts(corpus: &Corpus) -> Verdict {
    let subset = corpus.subset(&SUBSET7).map_err(|e| e.to_string())?;
    let reg = Arc::new(Registry::builtin());
    let h = Harness::scripted(reg.clone());
    let mut problems = Vec::new();

    for entry in &subset.entries {
        let run = |variant| {
            let case = Harness::case(&subset, entry, variant);
            let pipeline = h.pipeline_for(&case);
            let query = entry.query.clone();
            async move { pipeline.map_err(|e| e.to_string())?.run(&query, variant, None).await.map_err(|e| e.to_string()) }
        };

        let r = run(AblationVariant::NoReporter).await?;
        let leg = &r.planned.leg;
        let source = leg
            .merge
            .as_ref()
            .map(|m| m.node_id.clone())
            .or_else(|| leg.tracks[0].stages.last().and_then(|s| s.nodes.last()).map(|n| n.node_id.clone()))
            .ok_or("empty graph")?;
        let brief = r.result.per_node_outputs.get(&source).map(|b| b.text.clone()).unwrap_or_default();
        if r.result.final_text != brief || r.result.reporter_input.as_deref() != Some(brief.as_str()) {
            problems.push(format!("{}: no_reporter final text is not the {source} brief", entry.id));
        }

        let r = run(AblationVariant::NoConsolidation).await?;
        let input = r.result.reporter_input.clone().unwrap_or_default();
        for b in r.result.outputs_of(NodeKind::Specialist) {
            if !input.contains(&b.text) {
                problems.push(format!("{}: reporter input lacks the {} brief", entry.id, b.producer_node));
            }
        }
    }

    let leg = static_leg(&reg, "q").map_err(|e| e.to_string())?;
    let shape: Vec<(StageKind, Vec<String>)> = leg.tracks[0]
        .stages
        .iter()
        .map(|s| (s.kind, s.nodes.iter().map(|n| n.agent_id.clone()).collect()))
        .collect();
    let want = vec![
        (StageKind::Specialists, vec!["nhc".to_string()]),
        (StageKind::Specialists, vec!["noaa_coops".to_string(), "usgs".to_string()]),
        (StageKind::Consolidator, vec!["consolidator".to_string()]),
        (StageKind::Specialists, vec!["fema".to_string()]),
    ];
    if shape != want || leg.tracks.len() != 1 || leg.merge.is_some() {
        problems.push(format!("static graph has shape {shape:?}"));
    }
    let fixed = h.run_benchmark(&subset, AblationVariant::FixedGraph).await;
    if fixed.errors > 0 || fixed.queries.iter().any(|q| q.node_count != leg.node_count()) {
        problems.push("fixed_graph runs did not all use the static graph".into());
    }
    let nodes = leg.node_count();
    if nodes != 7 {
        problems.push(format!(
            "fixed_graph compiles to {nodes} nodes (nhc, noaa_coops, usgs, consolidator, fema, reporter); the criterion expects 7"
        ));
    }
    if problems.is_empty() {
        Ok("no_reporter verbatim 7/7, no_consolidation substrings 7/7, fixed_graph 7 nodes".into())
    } else {
        Err(problems.join("; "))
    }
}

async fn fault_tolerance(corpus: &Corpus, suite: &StressSuite) -> Verdict {
    let h = Harness::scripted(Arc::new(Registry::builtin()));
    let StressReport::Fault(FaultReport { rows, .. }) = h.run_stress(StressKind::Fault, corpus, suite).await else {
        return Err("fault runner returned another report".into());
    };
    let agents: BTreeSet<&str> = rows.iter().map(|r| r.agent.as_str()).collect();
    ensure(agents == BTreeSet::from(["noaa_coops", "usgs", "fema"]), format!("faulted agents {agents:?}"))?;
    let no_crash = rows.iter().filter(|r| r.no_crash).count();
    let non_empty = rows.iter().filter(|r| !r.outcome.final_text.trim().is_empty()).count();
    ensure(no_crash == 3 && non_empty == 3, format!("no crash {no_crash}/3, non-empty answer {non_empty}/3"))?;
    Ok("no crash 3/3, non-empty final text 3/3 (noaa_coops, usgs, fema)".into())
}

fn leg_properties() -> Verdict {
    let reg = Registry::builtin();
    let cases = 1000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&(common::plans(), common::features()), |(plan, feats)| {
            common::check_plan(&plan, &feats, &reg).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&(common::plans(), 0usize..8, 0usize..8), |(plan, t, l)| {
            common::check_architect_rejected(&plan, t, l, &reg).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random plans: single-class layers, idempotent rewrite, invariants hold, consolidators placed; {cases} architect injections rejected"))
}

async fn topology_harness(corpus: &Corpus, suite: &StressSuite) -> Verdict {
    let h = Harness::scripted(Arc::new(Registry::builtin()));
    let clean = h.run_topology_harness(corpus, &BTreeMap::new()).await;
    ensure(clean.total == 37 && clean.correct == 37, format!("clean run {}/{}", clean.correct, clean.total))?;
    let injected = h.run_topology_harness(corpus, &suite.topology_faults).await;
    let expected: BTreeSet<String> = suite.topology_faults.keys().cloned().collect();
    let reported: BTreeSet<String> = injected.failures.iter().cloned().collect();
    ensure(expected.len() == 5, format!("{} injected scripts", expected.len()))?;
    ensure(reported == expected, format!("reported failures {reported:?}, injected {expected:?}"))?;
    Ok(format!(
        "37/37 = {:.0}% clean; injected {:?} reported exactly",
        clean.score_pct,
        expected.iter().collect::<Vec<_>>()
    ))
}

#[tokio::main]
async fn main() {
    let corpus = Corpus::builtin().expect("corpus");
    let suite = StressSuite::builtin().expect("stress suite");
    let results: Vec<(&str, Verdict)> = vec![
        ("metric oracles", metric_oracles()),
        ("table consistency", table1_consistency()),
        ("cost arithmetic", cost_arithmetic()),
        ("deterministic end-to-end", deterministic_e2e(&corpus).await),
        ("ablation contracts", ablation_contracts(&corpus).await),
        ("fault tolerance", fault_tolerance(&corpus, &suite).await),
        ("LEG properties", leg_properties()),
        ("topology harness", topology_harness(&corpus, &suite).await),
    ];
    let mut failed = 0;
    for (name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
