mod config;

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stormleg_core::eval::report::{
    render_ablation, render_benchmark, render_cost, render_stress, render_topology, variant_slug, write_report,
};
use stormleg_core::eval::{Harness, PublishedResults, StressKind};
use stormleg_core::executor::AblationVariant;
use stormleg_core::llm::ScriptedBackend;
use stormleg_core::pipeline::{Pipeline, PipelineRun, Planned};
use stormleg_core::provenance::{LedgerFilter, TraceId};
use stormleg_core::tools::{FaultPlan, FixtureBackend, ToolOutcome};
use stormleg_gateway::{BackendProvider, Gateway, GatewayConfig, LiveProvider, ScriptedProvider};

use config::CliConfig;

/// `println!` that reports a closed pipe as an error instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "stormleg", version, about = "Plan, run and evaluate layered multi-agent pipelines")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "STORMLEG_CONFIG")]
    config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propose and compile a graph without executing it.
    Plan {
        query: String,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
    },
    /// Plan, sign off and execute one query.
    Run {
        query: String,
        #[command(flatten)]
        source: Source,
        /// Execute the proposed plan without asking.
        #[arg(long, conflicts_with = "interactive")]
        approve_auto: bool,
        /// Show the plan and wait for `approve`, `revise: <text>` or `abort` on stdin.
        #[arg(long)]
        interactive: bool,
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
        /// Specialist whose tool calls all fail.
        #[arg(long)]
        fault: Option<String>,
    },
    /// Score a corpus: `all`, `subset7`, comma-separated ids or a corpus file.
    Bench {
        corpus: String,
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
        #[command(flatten)]
        set: ScriptSet,
    },
    /// Run every ablation variant against the full system.
    Ablate {
        subset: String,
        #[command(flatten)]
        set: ScriptSet,
    },
    /// Stress suites: scaling, paraphrase, adversarial, fault or topology.
    Stress {
        kind: String,
        /// Topology only: replace architect scripts with the wrong-topology set.
        #[arg(long)]
        inject_faults: bool,
        #[command(flatten)]
        set: ScriptSet,
    },
    /// Tool-call records of a persisted trace.
    Trace {
        id: String,
        #[arg(long)]
        node: Option<String>,
        #[arg(long)]
        tool: Option<String>,
        #[arg(long)]
        outcome: Option<ToolOutcome>,
        /// Print the portable export document instead.
        #[arg(long)]
        export: bool,
    },
    /// Published-table consistency and cost arithmetic.
    Reference,
    /// Serve the HTTP gateway.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Shared bearer token.
        #[arg(long, env = "STORMLEG_TOKEN")]
        token: Option<String>,
        /// Static console bundle.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Replay shipped scenarios even when a live provider is configured.
        #[arg(long)]
        scripted: bool,
    },
}

#[derive(Args)]
struct Source {
    /// Scenario to replay: a corpus id, a demo name or a script path.
    #[arg(long)]
    scripted: Option<String>,
}

#[derive(Args)]
struct ScriptSet {
    /// Replay shipped scripts (`full`) or those of another data directory.
    #[arg(long, num_args = 0..=1, default_missing_value = "full")]
    scripted: Option<String>,
    /// Report directory; defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("STORMLEG_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

async fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    let json = cli.json;
    match cli.command {
        Command::Plan { query, source, variant } => plan(&cfg, &query, &source, variant, json).await,
        Command::Run { query, source, approve_auto: _, interactive, variant, fault } => {
            let stdin = std::io::stdin();
            run(&cfg, &query, &source, variant, fault, interactive.then(|| stdin.lock()), json).await
        }
        Command::Bench { corpus, variant, set } => {
            apply_set(&mut cfg, &set)?;
            bench(&cfg, &corpus, variant, &set, json).await
        }
        Command::Ablate { subset, set } => {
            apply_set(&mut cfg, &set)?;
            ablate(&cfg, &subset, &set, json).await
        }
        Command::Stress { kind, inject_faults, set } => {
            apply_set(&mut cfg, &set)?;
            stress(&cfg, &kind, inject_faults, &set, json).await
        }
        Command::Trace { id, node, tool, outcome, export } => trace(&cfg, &id, node, tool, outcome, export, json),
        Command::Reference => reference(json),
        Command::Serve { port, host, token, ui_dir, scripted } => serve(&cfg, &host, port, token, ui_dir, scripted).await,
    }
}

/// `--scripted <dir>` points the runners at another data directory.
fn apply_set(cfg: &mut CliConfig, set: &ScriptSet) -> Result<()> {
    match set.scripted.as_deref() {
        None | Some("full") | Some("builtin") => Ok(()),
        Some(dir) => {
            let dir = PathBuf::from(dir);
            if !dir.join("corpus.json").is_file() {
                bail!("--scripted {}: expected `full` or a data directory holding corpus.json", dir.display());
            }
            cfg.data_dir = Some(dir);
            Ok(())
        }
    }
}

fn pipeline(cfg: &CliConfig, query: &str, source: &Source, variant: AblationVariant) -> Result<Pipeline> {
    let registry = cfg.registry()?;
    let ledger = cfg.ledger()?;
    let live = if source.scripted.is_none() { cfg.live_backends()? } else { None };
    let (model, tools) = match live {
        Some(backends) => backends,
        None => {
            let catalog = cfg.scenarios()?;
            let scenario = match &source.scripted {
                Some(name) => catalog.resolve(name, query)?,
                None => catalog
                    .by_query(query)
                    .cloned()
                    .ok_or_else(|| anyhow!("no live provider configured and no shipped scenario matches; pass --scripted"))?,
            };
            let mut script = scenario.script.clone();
            if variant == AblationVariant::FixedGraph {
                let alt = script.parent().unwrap_or(Path::new(".")).join("fixed_graph").join(script.file_name().unwrap_or_default());
                if alt.is_file() {
                    script = alt;
                }
            }
            let model = ScriptedBackend::from_path(&script).with_context(|| format!("script {}", script.display()))?;
            let tools = FixtureBackend::from_dir(&scenario.fixtures)
                .with_context(|| format!("fixtures {}", scenario.fixtures.display()))?;
            (Arc::new(model) as _, Arc::new(tools) as _)
        }
    };
    let mut p = Pipeline::new(registry, model, tools, ledger).with_patterns(cfg.patterns()?);
    if let Some(text) = cfg.heuristics_text()? {
        p = p.with_heuristics_text(text);
    }
    Ok(p)
}

fn print_plan(out: &mut impl Write, planned: &Planned) -> Result<()> {
    writeln!(out, "{}", planned.leg.diagram())?;
    if let Some(p) = &planned.proposed {
        for note in p.rewrite_log.iter().filter(|n| n.applied) {
            writeln!(out, "rewrite: {}", serde_json::to_string(note)?)?;
        }
    }
    writeln!(out, "{} nodes", planned.leg.node_count())?;
    Ok(())
}

async fn plan(cfg: &CliConfig, query: &str, source: &Source, variant: AblationVariant, json: bool) -> Result<()> {
    let p = pipeline(cfg, query, source, variant)?;
    let planned = p.plan(query, variant).await?;
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&planned)?)?;
    } else {
        print_plan(&mut out, &planned)?;
        writeln!(out, "{}", serde_json::to_string_pretty(&planned.leg)?)?;
    }
    Ok(())
}

enum Decision {
    Approve(Planned),
    Abort,
}

/// The sign-off loop: nothing executes before an `approve` line.
async fn sign_off(p: &Pipeline, query: &str, mut planned: Planned, input: &mut impl BufRead, out: &mut impl Write) -> Result<Decision> {
    loop {
        print_plan(out, &planned)?;
        write!(out, "approve | revise: <text> | abort > ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out, "\ninput closed; aborting")?;
            return Ok(Decision::Abort);
        }
        let line = line.trim();
        if line.eq_ignore_ascii_case("approve") {
            return Ok(Decision::Approve(planned));
        }
        if line.eq_ignore_ascii_case("abort") {
            return Ok(Decision::Abort);
        }
        let Some(feedback) = line.strip_prefix("revise:") else {
            writeln!(out, "unrecognized command {line:?}")?;
            continue;
        };
        let Some(prior) = &planned.proposed else {
            writeln!(out, "the static graph cannot be revised")?;
            continue;
        };
        match p.architect().revise(query, prior, feedback.trim()).await {
            Ok(revised) => {
                planned = Planned { plan: revised.plan.clone(), leg: revised.leg.clone(), proposed: Some(revised) };
            }
            Err(e) => writeln!(out, "revision failed: {e}; the previous plan stands")?,
        }
    }
}

async fn run(
    cfg: &CliConfig,
    query: &str,
    source: &Source,
    variant: AblationVariant,
    fault: Option<String>,
    interactive: Option<impl BufRead>,
    json: bool,
) -> Result<()> {
    let p = pipeline(cfg, query, source, variant)?;
    if let Some(agent) = &fault {
        if p.registry().get(agent).is_none_or(|a| !a.is_specialist()) {
            bail!("--fault {agent}: not a registered specialist");
        }
    }
    let planned = p.plan(query, variant).await?;
    let mut out = std::io::stdout().lock();
    let planned = match interactive {
        Some(mut input) => match sign_off(&p, query, planned, &mut input, &mut out).await? {
            Decision::Approve(planned) => planned,
            Decision::Abort => {
                writeln!(out, "aborted; nothing executed")?;
                return Ok(());
            }
        },
        None => planned,
    };
    let run = p.execute(planned, query, variant, fault.map(FaultPlan::outage)).await;
    report_run(&mut out, &run, p.ledger().dir(), json)
}

fn report_run(out: &mut impl Write, run: &PipelineRun, ledger_dir: Option<&Path>, json: bool) -> Result<()> {
    let r = &run.result;
    if json {
        let v = json!({
            "trace_id": r.trace_id,
            "variant": r.variant,
            "final_text": r.final_text,
            "failed": r.failed,
            "plan": run.planned.plan,
            "node_count": run.planned.leg.node_count(),
            "dispatches": r.dispatches,
            "usage": run.usage,
            "ledger_dir": ledger_dir,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        return Ok(());
    }
    print_plan(out, &run.planned)?;
    writeln!(out, "{}\n", r.final_text)?;
    if let Some(e) = &r.failed {
        writeln!(out, "run failed: {e}")?;
    }
    let total = run.usage.total();
    writeln!(out, "trace {}  ({} tool calls, {} in / {} out tokens)", r.trace_id, r.dispatches, total.input_tokens, total.output_tokens)?;
    if let Some(dir) = ledger_dir {
        writeln!(out, "ledger {}", dir.join(format!("{}.jsonl", r.trace_id)).display())?;
    }
    Ok(())
}

fn harness(cfg: &CliConfig, set: &ScriptSet) -> Result<Harness> {
    let registry = cfg.registry()?;
    let live = if set.scripted.is_some() { None } else { cfg.live_backends()? };
    let h = match live {
        Some((model, tools)) => Harness::live(registry, model, tools),
        None => Harness::scripted(registry),
    };
    Ok(h.with_ledger(cfg.ledger()?)
        .with_patterns(cfg.patterns()?)
        .with_cost_model(cfg.cost())
        .with_concurrency(cfg.concurrency.unwrap_or(4)))
}

fn emit<T: serde::Serialize>(cfg: &CliConfig, set: &ScriptSet, name: &str, report: &T, markdown: &str, json: bool) -> Result<()> {
    let dir = set.out.clone().unwrap_or_else(|| cfg.out_dir());
    let (j, m) = write_report(&dir, name, report, markdown)?;
    if json {
        say!("{}", serde_json::to_string_pretty(report)?);
    } else {
        say!("{markdown}");
        say!("wrote {} and {}", j.display(), m.display());
    }
    Ok(())
}

async fn bench(cfg: &CliConfig, corpus: &str, variant: AblationVariant, set: &ScriptSet, json: bool) -> Result<()> {
    let corpus = cfg.corpus(corpus)?;
    let h = harness(cfg, set)?;
    let report = h.run_benchmark(&corpus, variant).await;
    emit(cfg, set, &format!("bench_{}", variant_slug(variant)), &report, &render_benchmark(&report), json)
}

async fn ablate(cfg: &CliConfig, subset: &str, set: &ScriptSet, json: bool) -> Result<()> {
    let corpus = cfg.corpus(subset)?;
    let h = harness(cfg, set)?;
    let report = h.run_ablation(&corpus, &AblationVariant::ALL).await;
    emit(cfg, set, "ablation", &report, &render_ablation(&report), json)
}

async fn stress(cfg: &CliConfig, kind: &str, inject_faults: bool, set: &ScriptSet, json: bool) -> Result<()> {
    let corpus = cfg.corpus("all")?;
    let suite = cfg.stress_suite()?;
    let h = harness(cfg, set)?;
    if kind == "topology" {
        let overrides = if inject_faults { suite.topology_faults.clone() } else { Default::default() };
        let report = h.run_topology_harness(&corpus, &overrides).await;
        return emit(cfg, set, "stress_topology", &report, &render_topology(&report), json);
    }
    let kind: StressKind = kind.parse().map_err(|e: String| anyhow!("{e}; or topology"))?;
    let report = h.run_stress(kind, &corpus, &suite).await;
    emit(cfg, set, &format!("stress_{}", kind.as_str()), &report, &render_stress(&report), json)
}

fn trace(
    cfg: &CliConfig,
    id: &str,
    node: Option<String>,
    tool: Option<String>,
    outcome: Option<ToolOutcome>,
    export: bool,
    json: bool,
) -> Result<()> {
    let ledger = cfg.ledger()?;
    let trace = TraceId(id.to_string());
    if export {
        write!(std::io::stdout().lock(), "{}", ledger.export_trace(&trace)?)?;
        return Ok(());
    }
    let filter = LedgerFilter { node, tool, outcome, ..LedgerFilter::default() };
    let records = ledger.query(&trace, &filter)?;
    if json {
        say!("{}", serde_json::to_string_pretty(&records)?);
        return Ok(());
    }
    say!("trace {id}: {}", ledger.query_text(&trace)?);
    if records.is_empty() {
        say!("no matching tool calls");
    }
    for r in &records {
        say!(
            "{:>4}  {:<22} {:<34} {:<6} {:>6} ms  {}",
            r.seq,
            r.node_id,
            r.tool_name,
            serde_json::to_value(r.outcome)?.as_str().unwrap_or_default(),
            r.duration_ms,
            r.arguments_preview
        );
    }
    Ok(())
}

fn reference(json: bool) -> Result<()> {
    let p = PublishedResults::builtin()?;
    let checks = p.table1_consistency();
    let cost = p.stage_cost();
    if json {
        say!("{}", serde_json::to_string_pretty(&json!({"consistency": checks, "cost": cost}))?);
        return Ok(());
    }
    say!("| Column | Mean of metrics | Reported overall | Difference | Consistent |");
    say!("|---|---:|---:|---:|:---:|");
    for c in &checks {
        say!(
            "| {} | {:.2} | {:.1} | {:.3} | {} |",
            c.column,
            c.mean_of_metrics,
            c.reported_overall,
            c.difference,
            if c.within_tolerance { "yes" } else { "no" }
        );
    }
    say!("\n{}", render_cost(&cost));
    Ok(())
}

async fn serve(cfg: &CliConfig, host: &str, port: u16, token: Option<String>, ui_dir: Option<PathBuf>, scripted: bool) -> Result<()> {
    if let Some(dir) = &ui_dir {
        if !dir.is_dir() {
            bail!("--ui-dir {}: not a directory", dir.display());
        }
    }
    let live = if scripted { None } else { cfg.live_backends()? };
    let provider: Arc<dyn BackendProvider> = match live {
        Some((model, tools)) => Arc::new(LiveProvider::new(model, tools)),
        None => Arc::new(ScriptedProvider::new(cfg.scenarios()?)),
    };
    let config = GatewayConfig {
        token,
        ui_dir,
        session_log: Some(cfg.ledger_dir().join("sessions.jsonl")),
        patterns: cfg.patterns()?,
        ..GatewayConfig::default()
    };
    let gw = Gateway::new(cfg.registry()?, cfg.ledger()?, provider, config);
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    eprintln!("serving on http://{addr}");
    stormleg_gateway::serve(gw, addr).await?;
    Ok(())
}
