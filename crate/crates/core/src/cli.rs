//! `resilsim` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or IO failure, 2 config or validation
//! error, 3 refusal because the exact state space exceeds the limit.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fetch::fetch_dependencies;
use crate::graph::{parse_dependencies_value, serialize_dependencies, validate_graph, ServiceName};
use crate::live::{
    analyze_request_log_with, compare, parse_request_log, plot_rows, write_csv, AnalyzeOptions,
    ComparisonRow, Denominator, LiveResilience, ScenarioTrials,
};
use crate::manifest::{manifest_path, to_sorted_json, write_text, write_with_manifest, RunManifest};
use crate::oracle::{
    exact_resilience, exact_vs_mc_report, ExactComparison, ExactResult, DEFAULT_STATE_LIMIT,
};
use crate::scenario::{BuiltinScenario, LoadedScenario, ScenarioConfig};
use crate::sim::{run_monte_carlo_with_workers, ResilienceReport};

#[derive(Debug, Parser)]
#[command(
    name = "resilsim",
    version,
    about = "Predict microservice resilience from a dependency graph"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch or read a dependencies document, normalize it and report diagnostics.
    Discover(DiscoverArgs),
    /// Monte-Carlo resilience estimate.
    Simulate(SimulateArgs),
    /// Exact resilience by exhaustive enumeration.
    Exact(ExactArgs),
    /// Measured resilience from request logs.
    AnalyzeLive(AnalyzeLiveArgs),
    /// Compare model predictions with live measurements.
    Compare(CompareArgs),
    /// Emit per-trial model/live values as CSV for plotting.
    EmitPlot(EmitPlotArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["url", "input"]))]
pub struct DiscoverArgs {
    /// Tracing backend base URL, e.g. http://jaeger:16686
    #[arg(long)]
    pub url: Option<String>,
    /// Dependencies document on disk.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = crate::graph::SOCIAL_NETWORK_ENTRY)]
    pub entry: String,
    /// Lookback window in seconds.
    #[arg(long, default_value_t = 86_400)]
    pub lookback: u64,
    /// End of the window, milliseconds since the epoch (default: now).
    #[arg(long)]
    pub end_ts: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `builtin-norepl`, `builtin-repl`, a config file, or a run manifest.
    #[arg(long)]
    pub config: String,
    /// Keep these services out of the failure fleet.
    #[arg(long = "exclude-service")]
    pub exclude_service: Vec<String>,
    #[arg(long)]
    pub p_fail: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "RESILSIM_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
    pub state_limit: u128,
    /// A `simulate` output to check against the exact values.
    #[arg(long)]
    pub against: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeLiveArgs {
    /// Request log(s); one trial per file.
    #[arg(long, required = true)]
    pub log: Vec<PathBuf>,
    /// Half-open window `START:END` in log timestamp units.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(f64, f64)>,
    /// Drop 4xx responses from the denominator.
    #[arg(long)]
    pub drop_4xx: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario label per --model/--live pair.
    #[arg(long)]
    pub scenario: Vec<String>,
    /// Model values: a simulate output, a JSON number array, or one number per line.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// Live values: an analyze-live output, a JSON number array, or one number per line.
    #[arg(long, required = true)]
    pub live: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Denominator::Live)]
    pub denominator: Denominator,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmitPlotArgs {
    /// `compare` outputs.
    #[arg(long, required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let start: f64 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let end: f64 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    if start.partial_cmp(&end) != Some(std::cmp::Ordering::Less) {
        return Err("START must be below END".into());
    }
    Ok((start, end))
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Discover(a) => cmd_discover(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| 0),
        Command::Exact(a) => cmd_exact(&a).map(|_| 0),
        Command::AnalyzeLive(a) => cmd_analyze_live(&a).map(|_| 0),
        Command::Compare(a) => cmd_compare(&a).map(|_| 0),
        Command::EmitPlot(a) => cmd_emit_plot(&a).map(|_| 0),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit<T: Serialize>(output: Option<&Path>, value: &T, manifest: &mut RunManifest) -> Result<()> {
    match output {
        Some(p) => write_with_manifest(p, value, manifest),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(to_sorted_json(value)?.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn manifest_ref(output: Option<&Path>) -> Option<String> {
    output.map(|p| {
        manifest_path(p)
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned()
    })
}

pub fn cmd_discover(args: &DiscoverArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("discover");
    let document = match (&args.url, &args.input) {
        (Some(url), _) => {
            let end = args
                .end_ts
                .map(|ms| UNIX_EPOCH + Duration::from_millis(ms))
                .unwrap_or_else(SystemTime::now);
            fetch_dependencies(url, Duration::from_secs(args.lookback), end)?
        }
        (None, Some(path)) => serde_json::from_str(&read(path)?)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?,
        (None, None) => return Err(Error::Argument("one of --url or --input is required".into())),
    };
    let graph = parse_dependencies_value(&document)?;
    write_text(&args.output, &(serialize_dependencies(&graph) + "\n"))?;
    manifest.outputs.push(args.output.display().to_string());
    manifest.finish();
    write_text(&manifest_path(&args.output), &to_sorted_json(&manifest)?)?;

    let diag = validate_graph(&graph, &args.entry);
    #[derive(Serialize)]
    struct Summary<'a> {
        nodes: usize,
        edges: usize,
        entry: &'a str,
        diagnostics: &'a crate::graph::GraphDiagnostics,
    }
    print!(
        "{}",
        to_sorted_json(&Summary {
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            entry: &args.entry,
            diagnostics: &diag,
        })?
    );
    if diag.is_fatal() {
        eprintln!("error: entry {} is not in the graph", args.entry);
        return Ok(2);
    }
    if !diag.unreachable_nodes.is_empty() {
        eprintln!(
            "warning: {} node(s) unreachable from {}",
            diag.unreachable_nodes.len(),
            args.entry
        );
    }
    if diag.cycles_present {
        eprintln!("warning: dependency graph contains a cycle");
    }
    Ok(0)
}

/// Reads `--config`: a built-in name, a config document, or a manifest /
/// output document carrying an embedded `config`.
pub fn load_config(spec: &str) -> Result<(ScenarioConfig, Option<PathBuf>)> {
    match spec {
        "builtin-norepl" | "builtin" => return Ok((ScenarioConfig::builtin(BuiltinScenario::Norepl), None)),
        "builtin-repl" => return Ok((ScenarioConfig::builtin(BuiltinScenario::Repl), None)),
        _ => {}
    }
    let path = PathBuf::from(spec);
    let text = read(&path)?;
    let base = path.parent().map(Path::to_path_buf);
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::config("document", e.to_string()))?;
    let cfg = match value.get("config") {
        Some(embedded)
            if value.get("tool").is_some()
                || value.get("report").is_some()
                || value.get("exact").is_some() =>
        {
            ScenarioConfig::from_json(&embedded.to_string())?
        }
        _ => ScenarioConfig::from_json(&text)?,
    };
    Ok((cfg, base))
}

fn load_model(args: &ModelArgs) -> Result<(LoadedScenario, ScenarioConfig)> {
    let (mut cfg, base) = load_config(&args.config)?;
    for s in &args.exclude_service {
        let name =
            ServiceName::new(s.as_str()).map_err(|e| Error::config("exclude-service", e.to_string()))?;
        if !cfg.exclude.contains(&name) {
            cfg.exclude.push(name);
        }
    }
    if let Some(p) = args.p_fail {
        cfg.failure.p_fail = p;
    }
    let loaded = cfg.resolve(base.as_deref())?;
    let diag = validate_graph(&loaded.graph, loaded.scenario.entry().as_str());
    if !diag.unreachable_nodes.is_empty() {
        eprintln!(
            "warning: {} node(s) unreachable from {}",
            diag.unreachable_nodes.len(),
            loaded.scenario.entry()
        );
    }
    let snapshot = loaded.to_config();
    Ok((loaded, snapshot))
}

fn workers(n: Option<usize>) -> usize {
    n.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput {
    pub config: ScenarioConfig,
    pub report: ResilienceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<ResilienceReport> {
    let mut manifest = RunManifest::new("simulate");
    let (mut model, _) = load_model(&args.model)?;
    if let Some(seed) = args.seed {
        model.failure.master_seed = seed;
    }
    if let Some(n) = args.samples {
        model.failure.samples_per_round = n;
    }
    if let Some(r) = args.rounds {
        model.failure.rounds = r;
    }
    model.failure.validate()?;
    let config = model.to_config();
    let report = run_monte_carlo_with_workers(
        &model.graph,
        &model.scenario,
        &model.profiles,
        &model.failure,
        workers(args.model.workers),
    )?;
    manifest.config = Some(config.clone());
    manifest.master_seed = Some(model.failure.master_seed);
    let out = SimulateOutput {
        config,
        report: report.clone(),
        manifest: manifest_ref(args.model.output.as_deref()),
    };
    emit(args.model.output.as_deref(), &out, &mut manifest)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct ExactOutput {
    pub config: ScenarioConfig,
    pub exact: ExactResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<ExactComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn cmd_exact(args: &ExactArgs) -> Result<ExactResult> {
    let mut manifest = RunManifest::new("exact");
    let (model, config) = load_model(&args.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers(args.model.workers))
        .build()
        .map_err(|e| Error::Argument(e.to_string()))?;
    let exact = pool.install(|| {
        exact_resilience(
            &model.graph,
            &model.scenario,
            &model.profiles,
            model.failure.p_fail,
            args.state_limit,
        )
    })?;
    let check = match &args.against {
        Some(path) => {
            let doc: Value = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            let report: ResilienceReport = serde_json::from_value(doc.get("report").unwrap_or(&doc).clone())
                .map_err(|e| {
                    Error::parse(path.display().to_string(), format!("not a simulate output: {e}"))
                })?;
            Some(exact_vs_mc_report(&exact, &report)?)
        }
        None => None,
    };
    manifest.config = Some(config.clone());
    let out = ExactOutput {
        config,
        exact: exact.clone(),
        check,
        manifest: manifest_ref(args.model.output.as_deref()),
    };
    emit(args.model.output.as_deref(), &out, &mut manifest)?;
    Ok(exact)
}

#[derive(Debug, Serialize)]
pub struct LogResult {
    pub log: String,
    #[serde(flatten)]
    pub result: LiveResilience,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeOutput {
    pub logs: Vec<LogResult>,
    pub pooled: LiveResilience,
    /// One r_live per log, in argument order.
    pub round_values: Vec<f64>,
    pub drop_4xx: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn cmd_analyze_live(args: &AnalyzeLiveArgs) -> Result<AnalyzeOutput> {
    let mut manifest = RunManifest::new("analyze-live");
    let opts = AnalyzeOptions {
        window: args.window,
        drop_4xx: args.drop_4xx,
    };
    let mut logs = Vec::new();
    for path in &args.log {
        let records = parse_request_log(&read(path)?).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })?;
        logs.push(LogResult {
            log: path.display().to_string(),
            result: analyze_request_log_with(&records, &opts)?,
        });
    }
    let pooled = logs
        .iter()
        .skip(1)
        .fold(logs[0].result, |acc, l| acc.merge(&l.result));
    let out = AnalyzeOutput {
        round_values: logs.iter().map(|l| l.result.r_live).collect(),
        logs,
        pooled,
        drop_4xx: args.drop_4xx,
        window: args.window,
        manifest: manifest_ref(args.output.as_deref()),
    };
    emit(args.output.as_deref(), &out, &mut manifest)?;
    Ok(out)
}

/// Extracts trial values from a simulate/analyze-live output, a JSON array
/// of numbers, or plain text with one number per line.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = read(path)?;
    let bad = |m: &str| Error::parse(path.display().to_string(), m.to_string());
    let numbers = |v: &Value| -> Option<Vec<f64>> { v.as_array()?.iter().map(Value::as_f64).collect() };
    let values = match serde_json::from_str::<Value>(&text) {
        Ok(v @ Value::Array(_)) => numbers(&v).ok_or_else(|| bad("array must hold numbers"))?,
        Ok(Value::Number(n)) => vec![n.as_f64().ok_or_else(|| bad("not a number"))?],
        Ok(v @ Value::Object(_)) => {
            let inner = v.get("report").unwrap_or(&v);
            if let Some(rv) = inner.get("round_values") {
                numbers(rv).ok_or_else(|| bad("`round_values` must hold numbers"))?
            } else if let Some(r) = inner.get("r_live").and_then(Value::as_f64) {
                vec![r]
            } else {
                return Err(bad("no `round_values` or `r_live` field"));
            }
        }
        Ok(_) => return Err(bad("unsupported JSON value")),
        Err(_) => text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>().map_err(|_| {
                    Error::parse(
                        format!("{}: value {}", path.display(), i + 1),
                        format!("not a number: {l:?}"),
                    )
                })
            })
            .collect::<Result<_>>()?,
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(values)
}

#[derive(Debug, Serialize)]
pub struct CompareOutput {
    pub rows: Vec<ComparisonRow>,
    pub trials: Vec<ScenarioTrials>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareOutput> {
    let mut manifest = RunManifest::new("compare");
    if args.model.len() != args.live.len() {
        return Err(Error::Argument(format!(
            "{} --model inputs but {} --live inputs",
            args.model.len(),
            args.live.len()
        )));
    }
    if !args.scenario.is_empty() && args.scenario.len() != args.model.len() {
        return Err(Error::Argument(
            "give one --scenario per --model/--live pair".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (i, (m, l)) in args.model.iter().zip(&args.live).enumerate() {
        let name = args
            .scenario
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("scenario-{}", i + 1));
        let model = read_values(m)?;
        let live = read_values(l)?;
        rows.push(compare(&model, &live, &name, args.denominator)?);
        trials.push(ScenarioTrials {
            scenario: name,
            model,
            live,
        });
    }
    if let Some(csv_path) = &args.csv {
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf)?;
        write_text(csv_path, &String::from_utf8_lossy(&buf))?;
        manifest.outputs.push(csv_path.display().to_string());
    }
    let out = CompareOutput {
        rows,
        trials,
        manifest: manifest_ref(args.output.as_deref()),
    };
    emit(args.output.as_deref(), &out, &mut manifest)?;
    Ok(out)
}

pub fn cmd_emit_plot(args: &EmitPlotArgs) -> Result<usize> {
    let mut trials: Vec<ScenarioTrials> = Vec::new();
    for path in &args.reports {
        let doc: Value = serde_json::from_str(&read(path)?)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let t: Vec<ScenarioTrials> = serde_json::from_value(
            doc.get("trials")
                .cloned()
                .ok_or_else(|| Error::parse(path.display().to_string(), "not a compare output"))?,
        )
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        trials.extend(t);
    }
    let rows = plot_rows(&trials);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    match &args.output {
        Some(p) => {
            write_text(p, &String::from_utf8_lossy(&buf))?;
            let mut manifest = RunManifest::new("emit-plot");
            manifest.outputs.push(p.display().to_string());
            manifest.finish();
            write_text(&manifest_path(p), &to_sorted_json(&manifest)?)?;
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(rows.len())
}
