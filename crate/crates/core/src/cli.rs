//! Command-line front end.
//!
//! `select` and `evaluate` print one JSON object ([`RunRecord`]); `benchmark`
//! prints CSV with one row per run plus a `mean` row per cell.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::{simulate_spread, SpreadEstimate};
use crate::graph::{load_edge_list, Directedness, Graph, IdPolicy};
use crate::greedy::{greedy_select, GreedyConfig, DEFAULT_R};
use crate::models::{DiffusionModel, ModelKind};
use crate::rng::StreamKey;
use crate::tim::{run_tim, EstimationTrace, PhaseTimings, SeedResult, TimParams, Variant};

pub const CSV_HEADER: &str = "algorithm,k,epsilon,run,seconds,spread_estimate,theta,kpt_star,kpt_plus";

#[derive(Debug, Parser)]
#[command(name = "influmax", version, about = "Influence maximization with TIM / TIM+")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick a seed set and print it as JSON.
    Select(SelectArgs),
    /// Estimate the spread of a given seed set by forward simulation.
    Evaluate(EvaluateArgs),
    /// Time algorithms over a grid of k and epsilon; CSV on stdout.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Algorithm {
    #[value(name = "tim")]
    #[serde(rename = "tim")]
    Tim,
    #[value(name = "tim+")]
    #[serde(rename = "tim+")]
    TimPlus,
    #[value(name = "greedy")]
    #[serde(rename = "greedy")]
    Greedy,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Tim => "tim",
            Algorithm::TimPlus => "tim+",
            Algorithm::Greedy => "greedy",
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct GraphArgs {
    /// Edge list: `u v` or `u v p` per line.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// Insert every edge in both directions.
    #[arg(long)]
    pub undirected: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 is the reference setting for reproducibility.
    #[arg(long, env = "INFLUMAX_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: GraphArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ell: f64,
    #[arg(long, value_enum, default_value_t = Algorithm::TimPlus)]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub epsilon_prime: Option<f64>,
    /// Monte-Carlo trials per greedy estimate.
    #[arg(long, default_value_t = DEFAULT_R)]
    pub r: usize,
    /// CELF lazy evaluation for greedy.
    #[arg(long)]
    pub lazy: bool,
}

#[derive(Clone, Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: GraphArgs,
    /// Comma-separated node ids as they appear in the edge list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
}

#[derive(Clone, Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub input: GraphArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub epsilon_list: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tim,tim+")]
    pub algorithms: Vec<Algorithm>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ell: f64,
    #[arg(long, default_value_t = DEFAULT_R)]
    pub r: usize,
    #[arg(long)]
    pub lazy: bool,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|_| format!("expected one of ic, wc, lt, trigger; got `{s}`"))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunParams {
    pub algorithm: Option<Algorithm>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub ell: Option<f64>,
    pub epsilon_prime: Option<f64>,
    pub r: Option<usize>,
    pub lazy: Option<bool>,
    pub trials: Option<usize>,
    pub undirected: bool,
    pub threads: usize,
}

/// One JSON object per `select` or `evaluate` invocation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub dataset: String,
    pub model: String,
    pub nodes: usize,
    pub edges: usize,
    pub params: RunParams,
    pub seeds: Vec<String>,
    pub estimated_spread: Option<f64>,
    pub mc_spread: Option<SpreadEstimate>,
    pub trace: Option<EstimationTrace>,
    pub timings: PhaseTimings,
    pub rr_sets_generated: u64,
    pub peak_rss_bytes: Option<u64>,
    pub master_seed: u64,
    pub version: String,
}

/// Peak resident set size from `/proc/self/status`, where available.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

struct Loaded {
    graph: Graph,
    model: DiffusionModel,
    threads: usize,
}

fn load(input: &GraphArgs) -> Result<Loaded> {
    let file = File::open(&input.graph)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", input.graph.display()))))?;
    let directedness = if input.undirected { Directedness::Undirected } else { Directedness::Directed };
    let raw = load_edge_list(BufReader::new(file), directedness, IdPolicy::FirstAppearance)?;
    let mut rng = StreamKey::new(input.seed).derive(4).rng();
    let (graph, model) = input.model.prepare(&raw, &mut rng)?;
    let threads = match input.threads {
        Some(0) => return Err(Error::InvalidParameter("threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(Loaded { graph, model, threads })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

#[allow(clippy::too_many_arguments)]
fn run_algorithm(
    loaded: &Loaded,
    algorithm: Algorithm,
    k: usize,
    epsilon: f64,
    ell: f64,
    epsilon_prime: Option<f64>,
    greedy: &GreedyConfig,
    seed: u64,
) -> Result<SeedResult> {
    let variant = match algorithm {
        Algorithm::Tim => Variant::Tim,
        Algorithm::TimPlus => Variant::TimPlus,
        Algorithm::Greedy => {
            let cfg = GreedyConfig { master_seed: seed, ..greedy.clone() };
            return greedy_select(&loaded.graph, &loaded.model, k, &cfg);
        }
    };
    let mut params = TimParams::new(k, epsilon, ell, variant).with_seed(seed);
    params.epsilon_prime = epsilon_prime;
    run_tim(&loaded.graph, &loaded.model, &params)
}

fn dataset(path: &Path) -> String {
    path.display().to_string()
}

pub fn cmd_select(args: &SelectArgs) -> Result<RunRecord> {
    let loaded = load(&args.input)?;
    let greedy = GreedyConfig { r: args.r, lazy: args.lazy, master_seed: args.input.seed, time_budget: None };
    let result = in_pool(loaded.threads, || {
        run_algorithm(&loaded, args.algorithm, args.k, args.epsilon, args.ell, args.epsilon_prime, &greedy, args.input.seed)
    })??;
    let is_greedy = args.algorithm == Algorithm::Greedy;
    Ok(RunRecord {
        command: "select".into(),
        dataset: dataset(&args.input.graph),
        model: args.input.model.to_string(),
        nodes: loaded.graph.node_count(),
        edges: loaded.graph.edge_count(),
        params: RunParams {
            algorithm: Some(args.algorithm),
            k: Some(args.k),
            epsilon: Some(args.epsilon),
            ell: Some(args.ell),
            epsilon_prime: result.trace.as_ref().and_then(|t| t.epsilon_prime),
            r: is_greedy.then_some(args.r),
            lazy: is_greedy.then_some(args.lazy),
            trials: None,
            undirected: args.input.undirected,
            threads: loaded.threads,
        },
        seeds: result.labels,
        estimated_spread: Some(result.estimated_spread),
        mc_spread: None,
        trace: result.trace,
        timings: result.timings,
        rr_sets_generated: result.rr_sets_generated,
        peak_rss_bytes: peak_rss_bytes(),
        master_seed: args.input.seed,
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunRecord> {
    let labels: Vec<&str> = args.seeds.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if labels.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    if args.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let loaded = load(&args.input)?;
    let mut seeds = Vec::with_capacity(labels.len());
    for l in &labels {
        let v = loaded.graph.node_by_label(l).ok_or_else(|| Error::Validation(format!("unknown node id `{l}`")))?;
        seeds.push(v);
    }
    seeds.sort_unstable();
    seeds.dedup();
    let start = Instant::now();
    let key = StreamKey::new(args.input.seed).derive(5);
    let estimate = in_pool(loaded.threads, || simulate_spread(&loaded.graph, &loaded.model, &seeds, args.trials, key))??;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        command: "evaluate".into(),
        dataset: dataset(&args.input.graph),
        model: args.input.model.to_string(),
        nodes: loaded.graph.node_count(),
        edges: loaded.graph.edge_count(),
        params: RunParams {
            trials: Some(args.trials),
            undirected: args.input.undirected,
            threads: loaded.threads,
            ..Default::default()
        },
        seeds: seeds.iter().map(|&s| loaded.graph.label(s).to_string()).collect(),
        estimated_spread: Some(estimate.mean),
        mc_spread: Some(estimate),
        trace: None,
        timings: PhaseTimings { total: elapsed, ..Default::default() },
        rr_sets_generated: 0,
        peak_rss_bytes: peak_rss_bytes(),
        master_seed: args.input.seed,
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

#[derive(Clone, Debug, Default)]
struct Row {
    seconds: f64,
    spread: f64,
    theta: Option<f64>,
    kpt_star: Option<f64>,
    kpt_plus: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean_of(rows: &[Row], f: impl Fn(&Row) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(&f).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Writes the benchmark CSV. Run `i` of every cell uses master seed
/// `seed + i`.
pub fn cmd_benchmark<W: Write>(args: &BenchmarkArgs, out: &mut W) -> Result<()> {
    if args.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let loaded = load(&args.input)?;
    let greedy = GreedyConfig { r: args.r, lazy: args.lazy, master_seed: args.input.seed, time_budget: None };
    writeln!(out, "{CSV_HEADER}")?;
    for &algorithm in &args.algorithms {
        for &k in &args.k_list {
            for &epsilon in &args.epsilon_list {
                let mut rows = Vec::with_capacity(args.repeats);
                for run in 0..args.repeats {
                    let seed = args.input.seed.wrapping_add(run as u64);
                    let start = Instant::now();
                    let r = in_pool(loaded.threads, || {
                        run_algorithm(&loaded, algorithm, k, epsilon, args.ell, None, &greedy, seed)
                    })??;
                    let row = Row {
                        seconds: start.elapsed().as_secs_f64(),
                        spread: r.estimated_spread,
                        theta: r.trace.as_ref().map(|t| t.theta as f64),
                        kpt_star: r.trace.as_ref().map(|t| t.kpt_star),
                        kpt_plus: r.trace.as_ref().and_then(|t| t.kpt_plus),
                    };
                    writeln!(
                        out,
                        "{},{k},{epsilon},{run},{},{},{},{},{}",
                        algorithm.name(),
                        row.seconds,
                        row.spread,
                        opt(row.theta),
                        opt(row.kpt_star),
                        opt(row.kpt_plus)
                    )?;
                    rows.push(row);
                }
                writeln!(
                    out,
                    "{},{k},{epsilon},mean,{},{},{},{},{}",
                    algorithm.name(),
                    mean_of(&rows, |r| Some(r.seconds)).unwrap_or_default(),
                    mean_of(&rows, |r| Some(r.spread)).unwrap_or_default(),
                    opt(mean_of(&rows, |r| r.theta)),
                    opt(mean_of(&rows, |r| r.kpt_star)),
                    opt(mean_of(&rows, |r| r.kpt_plus))
                )?;
            }
        }
    }
    Ok(())
}

/// Runs a parsed command, writing its output to `out`.
pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<()> {
    match &cli.command {
        Command::Select(a) => write_json(out, &cmd_select(a)?),
        Command::Evaluate(a) => write_json(out, &cmd_evaluate(a)?),
        Command::Benchmark(a) => cmd_benchmark(a, out),
    }
}

fn write_json<W: Write>(out: &mut W, record: &RunRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}
