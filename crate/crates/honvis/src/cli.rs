//! `honvis` command line. Exit codes: 0 success, 1 usage error, 2 data error.
//! Progress is reported as JSON lines on standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use honvis_core::aggregate::{GroupAttribute, GroupingConfig, GroupingMode, WeightScheme};
use honvis_core::analytics::{
    analyze, detect_communities, kgram_divergence, kgram_divergence_walks, simulate_walks, AnalyticsReport,
    AnalyzeConfig,
};
use honvis_core::ingest::{build_trajectories, parse_ports, parse_voyages, IngestError};
use honvis_core::layout::{force_layout, ScatterLayout, DEFAULT_ITERATIONS};
use honvis_core::subgraph::{init_session, trace_step, Direction, DEFAULT_EPSILON};
use honvis_core::{build_fon, build_hon, BuildParams, ThresholdSpec, TrajectorySet};
use serde_json::json;
use thiserror::Error;

use crate::bundle::{
    canonical_json, check_analytics, check_layout, export_bundle, import_bundle, read_json, write_json, BundleError,
    NetworkBundle,
};
use crate::service::{serve, AppState};
use crate::views::{aggregation_view, step_view};

#[derive(Debug, Parser)]
#[command(name = "honvis", version, about = "Higher-order network analytics for vessel trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build FoN and HoN from port and voyage CSVs into a bundle.
    Build(BuildArgs),
    /// Compute metrics, PageRank, communities and entropy rates.
    Analyze(AnalyzeArgs),
    /// Force-directed coordinates for the HoN.
    Layout(LayoutArgs),
    /// Step a subgraph expansion from seed nodes.
    Trace(TraceArgs),
    /// Group HoN nodes by a port attribute.
    Aggregate(AggregateArgs),
    /// Simulate random walks and compare k-gram statistics.
    Simulate(SimulateArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    voyages: PathBuf,
    #[arg(long)]
    ports: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    max_order: u64,
    #[arg(long, default_value_t = 5)]
    min_support: u64,
    #[arg(long, default_value = "dynamic")]
    threshold: ThresholdSpec,
    #[arg(long)]
    max_gap_days: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Write skipped voyage rows here.
    #[arg(long)]
    rejects: Option<PathBuf>,
    /// Write the extracted trajectories here (CSV).
    #[arg(long)]
    trajectories_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    bundle: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    teleport: f64,
    #[arg(long, default_value_t = 0.85)]
    damping: f64,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LayoutArgs {
    bundle: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    bundle: PathBuf,
    #[arg(long = "seed-node", required = true, num_args = 1..)]
    seed_node: Vec<String>,
    #[arg(long, default_value = "forward")]
    direction: Direction,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    /// Metrics file supplying communities; otherwise computed with seed 0.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    bundle: PathBuf,
    #[arg(long, default_value = "exact")]
    grouping: GroupingMode,
    #[arg(long, default_value = "eco_realm")]
    attribute: String,
    #[arg(long, default_value = "uniform")]
    weight: WeightScheme,
    /// Skip edge bundling and emit straight chords.
    #[arg(long)]
    no_bundle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    bundle: PathBuf,
    #[arg(long)]
    walks: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    length: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Trajectory CSV (as written by `build --trajectories-out`) to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn progress(event: &str, fields: serde_json::Value) {
    let mut line = json!({ "event": event });
    if let (Some(obj), serde_json::Value::Object(extra)) = (line.as_object_mut(), fields) {
        obj.extend(extra);
    }
    eprintln!("{line}");
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            progress("error", json!({ "message": e.to_string() }));
            2
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Build(a) => build(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Layout(a) => layout(a),
        Command::Trace(a) => trace(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn build(a: BuildArgs) -> Result<(), CliError> {
    let ports = parse_ports(open(&a.ports)?)?;
    progress("ports", json!({ "count": ports.len() }));
    let voyages = parse_voyages(open(&a.voyages)?, &ports)?;
    progress("voyages", json!({ "accepted": voyages.voyages.len(), "rejected": voyages.rejects.len() }));
    if let Some(path) = &a.rejects {
        voyages.write_rejects(create(path)?).map_err(|source| CliError::Io { path: path.clone(), source })?;
    }
    let trajectories = build_trajectories(&voyages, a.max_gap_days);
    progress(
        "trajectories",
        json!({ "count": trajectories.trajectories.len(), "transitions": trajectories.total_transitions() }),
    );
    if let Some(path) = &a.trajectories_out {
        trajectories.to_csv(create(path)?)?;
    }
    let params = BuildParams { max_order: a.max_order as usize, min_support: a.min_support, threshold: a.threshold };
    let fon = build_fon(&trajectories);
    progress("fon", json!({ "nodes": fon.ports().len(), "edges": fon.edges().len() }));
    let hon = build_hon(&trajectories, params);
    progress("hon", json!({ "nodes": hon.nodes().len(), "edges": hon.edges().len(), "max_order": hon.max_node_order() }));
    let bundle = NetworkBundle::new(ports, fon, hon);
    bundle.validate()?;
    export_bundle(&bundle, &a.out)?;
    progress("written", json!({ "path": a.out }));
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&a.damping) || a.damping == 0.0 {
        return Err(CliError::Data(format!("damping must lie in (0, 1), got {}", a.damping)));
    }
    if !(0.0..1.0).contains(&a.teleport) {
        return Err(CliError::Data(format!("teleport must lie in [0, 1), got {}", a.teleport)));
    }
    let bundle = import_bundle(&a.bundle)?;
    progress("loaded", json!({ "hon_nodes": bundle.hon.nodes().len() }));
    let config = AnalyzeConfig { teleport: a.teleport, damping: a.damping, resolution: a.resolution, seed: a.seed };
    let report = analyze(&bundle.fon, &bundle.hon, config);
    progress(
        "analyzed",
        json!({
            "communities": report.communities.count,
            "entropy_rate_fon": report.entropy_rate_fon,
            "entropy_rate_hon": report.entropy_rate_hon,
        }),
    );
    write_json(&report, &a.out)?;
    progress("written", json!({ "path": a.out }));
    Ok(())
}

fn layout(a: LayoutArgs) -> Result<(), CliError> {
    let bundle = import_bundle(&a.bundle)?;
    let layout = force_layout(&bundle.hon, a.seed, a.iterations);
    write_json(&layout, &a.out)?;
    progress("written", json!({ "path": a.out, "nodes": layout.positions.len() }));
    Ok(())
}

fn load_metrics(path: &Path, bundle: &NetworkBundle) -> Result<AnalyticsReport, CliError> {
    let report: AnalyticsReport = read_json(path)?;
    check_analytics(&report, &bundle.hon)?;
    Ok(report)
}

fn trace(a: TraceArgs) -> Result<(), CliError> {
    let bundle = import_bundle(&a.bundle)?;
    let hon = &bundle.hon;
    let communities = match (&a.metrics, &bundle.analytics) {
        (Some(p), _) => load_metrics(p, &bundle)?.communities.assignment,
        (None, Some(r)) => r.communities.assignment.clone(),
        (None, None) => detect_communities(hon, 1.0, 0).assignment,
    };
    let seeds = a
        .seed_node
        .iter()
        .map(|l| hon.node_by_label(l).ok_or_else(|| CliError::Data(format!("unknown node '{l}'"))))
        .collect::<Result<Vec<usize>, _>>()?;
    let mut session =
        init_session(hon, &seeds, a.direction, DEFAULT_EPSILON).map_err(|e| CliError::Data(e.to_string()))?;
    for w in &session.warnings {
        progress("warning", json!({ "message": w }));
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for _ in 0..a.steps {
        let report = trace_step(&mut session, hon, &communities).map_err(|e| CliError::Data(e.to_string()))?;
        let line = serde_json::to_string(&step_view(&report, hon, &communities)).map_err(BundleError::from)?;
        writeln!(out, "{line}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<(), CliError> {
    let attribute: GroupAttribute = a.attribute.parse().map_err(|e: honvis_core::aggregate::AggregateError| {
        CliError::Data(e.to_string())
    })?;
    let bundle = import_bundle(&a.bundle)?;
    let grouping = GroupingConfig { attribute, mode: a.grouping, weight_scheme: a.weight };
    let view = aggregation_view(&bundle.hon, &bundle.ports, &grouping, None, !a.no_bundle)
        .map_err(|e| CliError::Data(e.to_string()))?;
    progress("aggregated", json!({ "nodes": view.network.nodes.len(), "edges": view.network.edges.len() }));
    emit(&view, a.out.as_deref())
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(write_json(value, path)?),
        None => {
            print!("{}", canonical_json(value)?);
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let bundle = import_bundle(&a.bundle)?;
    let (length, k) = (a.length as usize, a.k as usize);
    let hon_walks = simulate_walks(&bundle.hon, a.walks, length, a.seed);
    let fon_walks = simulate_walks(&bundle.fon, a.walks, length, a.seed);
    let mut result = json!({
        "walks": a.walks,
        "length": length,
        "seed": a.seed,
        "k": k,
        "jsd_hon_vs_fon": kgram_divergence_walks(&hon_walks, &fon_walks, k),
    });
    if let Some(path) = &a.reference {
        let reference = TrajectorySet::from_csv(open(path)?)?;
        result["jsd_hon_vs_reference"] = json!(kgram_divergence(&hon_walks, &reference, k));
        result["jsd_fon_vs_reference"] = json!(kgram_divergence(&fon_walks, &reference, k));
    }
    emit(&result, None)
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let bundle = import_bundle(&a.bundle)?;
    let metrics = a.metrics.as_deref().map(|p| load_metrics(p, &bundle)).transpose()?;
    let layout: Option<ScatterLayout> = match &a.layout {
        Some(p) => {
            let l: ScatterLayout = read_json(p)?;
            check_layout(&l, &bundle.hon)?;
            Some(l)
        }
        None => None,
    };
    let state = AppState::new(bundle, metrics, layout);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime
        .block_on(serve(state, &a.listen))
        .map_err(|source| CliError::Io { path: a.listen.clone().into(), source })
}
