//! Markdown rendering, report files and timestamp isolation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::cost::CostTally;
use super::runner::{
    AblationReport, AdversarialReport, BenchmarkReport, FaultReport, MetricSummary, ParaphraseReport, ScalingReport,
    StressReport, TopologyHarnessReport,
};
use super::EvalError;
use crate::executor::AblationVariant;

/// Fields that carry wall-clock measurements or run identifiers.
pub const VOLATILE_FIELDS: [&str; 7] = ["latency_s", "wall_s", "wall_ms", "trace_id", "per_node_ms", "generated_at", "duration_ms"];

/// Zeroes every volatile field so two runs can be compared byte for byte.
pub fn normalize(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if VOLATILE_FIELDS.contains(&k.as_str()) {
                    *v = match v {
                        Value::Number(_) => Value::from(0),
                        Value::String(_) => Value::from(""),
                        Value::Object(_) => Value::Object(Default::default()),
                        _ => Value::Null,
                    };
                } else {
                    normalize(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        _ => {}
    }
}

pub fn normalized_json<T: Serialize>(report: &T) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    normalize(&mut v);
    serde_json::to_string_pretty(&v).expect("report serializes")
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.md`.
pub fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T, markdown: &str) -> Result<(PathBuf, PathBuf), EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
    let json_path = dir.join(format!("{name}.json"));
    let md_path = dir.join(format!("{name}.md"));
    let mut v = serde_json::to_value(report).map_err(|e| EvalError::Io(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.insert("generated_at".into(), Value::from(chrono::Utc::now().to_rfc3339()));
    }
    let body = serde_json::to_string_pretty(&v).map_err(|e| EvalError::Io(e.to_string()))?;
    std::fs::write(&json_path, body + "\n").map_err(|e| EvalError::Io(format!("{}: {e}", json_path.display())))?;
    std::fs::write(&md_path, markdown).map_err(|e| EvalError::Io(format!("{}: {e}", md_path.display())))?;
    Ok((json_path, md_path))
}

fn f1(v: f64) -> String {
    format!("{v:.1}")
}

fn signed(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        "0.0".to_string()
    } else {
        format!("{r:+.1}")
    }
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

fn metric_rows(cols: &[MetricSummary], out: &mut String) {
    let header: Vec<String> = cols.iter().map(|c| format!("{} (n={})", c.column, c.n)).collect();
    let _ = writeln!(out, "| Metric | {} |", header.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(cols.len()));
    let rows: [(&str, fn(&MetricSummary) -> f64); 5] = [
        ("Factual Precision", |c| c.factual_precision),
        ("Topology Selection", |c| c.topology_selection),
        ("Agent F1", |c| c.agent_f1),
        ("Source Attribution", |c| c.source_attribution),
        ("**Overall Score**", |c| c.overall),
    ];
    for (name, get) in rows {
        let cells: Vec<String> = cols.iter().map(|c| f1(get(c))).collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    let cells: Vec<String> = cols.iter().map(|c| format!("{:.0}", c.latency_s)).collect();
    let _ = writeln!(out, "| Avg. Latency (s) | {} |", cells.join(" | "));
}

pub fn render_benchmark(r: &BenchmarkReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Benchmark ({})\n", r.variant.label());
    metric_rows(&r.columns, &mut out);
    let _ = writeln!(
        out,
        "\nPass rate (≥50%): {}/{} ({:.0}%). {} errors across {} queries.\nWall-clock time: {:.1} s.\n",
        r.passed,
        r.total,
        if r.total == 0 { 0.0 } else { r.passed as f64 / r.total as f64 * 100.0 },
        r.errors,
        r.total,
        r.wall_s
    );
    let _ = writeln!(out, "## Per-query scores\n");
    let _ = writeln!(out, "| ID | Topology | Agents | Factual | Topo | F1 | Attr | Overall | Error |");
    let _ = writeln!(out, "|---|---|---|---:|---:|---:|---:|---:|---|");
    for q in &r.queries {
        let s = q.scores.as_ref();
        let pct = |f: fn(&super::metrics::MetricScores) -> f64| s.map_or("-".into(), |s| f1(f(s) * 100.0));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            q.id,
            q.topology().map_or("-".into(), |t| t.to_string()),
            q.selected_agents.iter().cloned().collect::<Vec<_>>().join(", "),
            pct(|s| s.factual_precision),
            pct(|s| s.topology_selection),
            pct(|s| s.agent_f1),
            pct(|s| s.source_attribution),
            pct(|s| s.overall),
            q.error.as_deref().unwrap_or("")
        );
    }
    let _ = writeln!(out);
    out.push_str(&render_cost(&r.cost));
    out
}

pub fn render_cost(t: &CostTally) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Token usage by stage\n");
    let _ = writeln!(out, "| Stage | Input | Output | % of Total | Cost ($) |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|");
    for s in &t.stages {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.1} | {:.4} |",
            s.stage, s.usage.input_tokens, s.usage.output_tokens, s.share_pct, s.cost
        );
    }
    let _ = writeln!(
        out,
        "| *Total* | {} | {} | 100.0 | {:.4} |\n",
        t.total_usage.input_tokens, t.total_usage.output_tokens, t.total_cost
    );
    let _ = writeln!(
        out,
        "Rates: ${:.2} / ${:.2} per million input / output tokens. Average per query: {:.0} tokens, ${:.3}.",
        t.model.input_rate, t.model.output_rate, t.per_query_tokens, t.per_query_cost
    );
    out
}

pub fn render_ablation(r: &AblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Ablation (n={})\n", r.baseline.total);
    let mut header = vec!["Full System".to_string()];
    let mut align = vec!["---:".to_string()];
    for v in &r.variants {
        header.push(format!("{} Score", v.variant.label()));
        header.push("Δ".into());
        align.push("---:".into());
        align.push("---:".into());
    }
    let _ = writeln!(out, "| Metric (%) | {} |", header.join(" | "));
    let _ = writeln!(out, "|---|{}|", align.join("|"));
    type Get = fn(&MetricSummary) -> f64;
    let rows: [(&str, Get); 4] = [
        ("Factual Precision", |c| c.factual_precision),
        ("Topology Selection", |c| c.topology_selection),
        ("Agent F1", |c| c.agent_f1),
        ("Source Attribution", |c| c.source_attribution),
    ];
    for (name, get) in rows {
        let base = get(&r.baseline.summary);
        let mut cells = vec![f1(base)];
        for v in &r.variants {
            let s = get(&v.summary);
            cells.push(f1(s));
            cells.push(signed(s - base));
        }
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    let mut cells = vec![format!("{:.0}", r.baseline.summary.latency_s)];
    for v in &r.variants {
        cells.push(format!("{:.0}", v.summary.latency_s));
        cells.push(signed(v.delta.latency_s));
    }
    let _ = writeln!(out, "| Avg. Latency (s) | {} |\n", cells.join(" | "));

    let _ = writeln!(out, "## Per-query overall scores\n");
    let mut names = vec!["Full System"];
    names.extend(r.variants.iter().map(|v| v.variant.label()));
    let _ = writeln!(out, "| ID | {} |", names.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(names.len()));
    for (i, q) in r.baseline.queries.iter().enumerate() {
        let mut cells = vec![q.scores.as_ref().map_or("-".into(), |s| f1(s.overall * 100.0))];
        for v in &r.variants {
            cells.push(
                v.report.queries.get(i).and_then(|q| q.scores.as_ref()).map_or("-".into(), |s| f1(s.overall * 100.0)),
            );
        }
        let _ = writeln!(out, "| {} | {} |", q.id, cells.join(" | "));
    }
    out
}

pub fn render_stress(r: &StressReport) -> String {
    match r {
        StressReport::Scaling(s) => render_scaling(s),
        StressReport::Paraphrase(p) => render_paraphrase(p),
        StressReport::Adversarial(a) => render_adversarial(a),
        StressReport::Fault(f) => render_fault(f),
    }
}

fn render_scaling(s: &ScalingReport) -> String {
    let mut out = String::from("# Complexity scaling\n\n| Sub-questions | n | Accuracy (%) | Latency (s) | Errors |\n|---|---:|---:|---:|---:|\n");
    for r in &s.rows {
        let _ = writeln!(out, "| {} | {} | {} | {:.0} | {} |", r.sub_questions, r.n, f1(r.accuracy_pct), r.latency_s, r.errors);
    }
    out
}

fn render_paraphrase(p: &ParaphraseReport) -> String {
    let mut out = String::from("# Paraphrase robustness\n\n| Query | Type | Topo. Agree | Agent Agree | Score σ (%) |\n|---|---|:-:|:-:|---:|\n");
    for g in &p.groups {
        let _ = writeln!(out, "| {} | {} | {} | {} | {} |", g.group, g.label, mark(g.topology_agree), mark(g.agents_agree), f1(g.score_sigma_pct));
    }
    let _ = writeln!(out, "| *Overall* | | {}/{} | {}/{} | {} |", p.topology_agree, p.total, p.agents_agree, p.total, f1(p.mean_sigma_pct));
    out
}

fn render_adversarial(a: &AdversarialReport) -> String {
    let mut out = String::from("# Adversarial robustness\n\n| ID | Adversarial Type | Issue Det. | Halluc. Free | Resp. |\n|---|---|:-:|:-:|:-:|\n");
    for r in &a.rows {
        let _ = writeln!(out, "| {} | {} | {} | {} | {} |", r.id, r.adversarial_type, mark(r.issue_detected), mark(r.hallucination_free), mark(r.responsive));
    }
    let _ = writeln!(out, "| *Overall* | | {}/{t} | {}/{t} | {}/{t} |", a.issue_detected, a.hallucination_free, a.responsive, t = a.total);
    out
}

fn render_fault(f: &FaultReport) -> String {
    let mut out = String::from("# Fault tolerance\n\n| Failed Source | Partial Answer | Notes Limit. | No Crash |\n|---|:-:|:-:|:-:|\n");
    for r in &f.rows {
        let _ = writeln!(out, "| {} | {} | {} | {} |", r.label, mark(r.partial_answer), mark(r.notes_limitation), mark(r.no_crash));
    }
    let _ = writeln!(out, "| *Overall* | {}/{t} | {}/{t} | {}/{t} |", f.partial_answer, f.notes_limitation, f.no_crash, t = f.total);
    out
}

pub fn render_topology(t: &TopologyHarnessReport) -> String {
    let mut out = format!(
        "# Topology selection harness\n\n{}/{} correct ({:.1}%).\n\n| ID | Expected | Selected | Injected | Correct |\n|---|---|---|:-:|:-:|\n",
        t.correct, t.total, t.score_pct
    );
    for r in &t.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.id,
            r.expected,
            r.selected.map_or("-".into(), |s| s.to_string()),
            if r.injected { "yes" } else { "" },
            mark(r.correct)
        );
    }
    out
}

/// Short label used in report file names.
pub fn variant_slug(v: AblationVariant) -> &'static str {
    v.as_str()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn volatile_fields_are_zeroed_recursively() {
        let mut v = json!({"latency_s": 3.2, "a": [{"trace_id": "abc", "x": 1}], "timing": {"wall_ms": 9, "per_node_ms": {"n": 2}}});
        normalize(&mut v);
        assert_eq!(v, json!({"latency_s": 0, "a": [{"trace_id": "", "x": 1}], "timing": {"wall_ms": 0, "per_node_ms": {}}}));
    }

    #[test]
    fn signed_deltas_render_like_the_tables() {
        assert_eq!(signed(-28.571), "-28.6");
        assert_eq!(signed(8.9), "+8.9");
        assert_eq!(signed(0.01), "0.0");
    }

    #[test]
    fn reports_land_as_json_and_markdown() {
        let dir = tempfile::tempdir().unwrap();
        let (j, m) = write_report(dir.path(), "bench_full", &json!({"x": 1}), "# t\n").unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(v["x"], 1);
        assert!(v["generated_at"].is_string());
        assert_eq!(std::fs::read_to_string(m).unwrap(), "# t\n");
    }
}
