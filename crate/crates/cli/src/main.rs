//! Command-line front end: training, evaluation, sweeps, self-checks, and
//! SINR dumps, all driven by one JSON experiment config.
//!
//! Exit codes: 0 success, 1 validation error (bad config, arguments, or
//! resume state), 2 runtime failure, 3 self-check failure.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use vecsim_core::env::VecEnv;
use vecsim_core::experiments::{
    self, compare_schemes, evaluate, run_sweep, RunManifest, Scheme, SweepSpec, SweepVariable,
    TraceWriter, METRICS_CSV_HEADER,
};
use vecsim_core::madrl::{self, HeuristicKind, Policy, TrainMode};
use vecsim_core::nn::QNetwork;
use vecsim_core::radio::{rate_v2i, rate_v2v, AssociationMap, DrawTable, TxTarget};
use vecsim_core::rng::{Domain, Stream};
use vecsim_core::scenario::{load_config, ConfigError, ExperimentConfig};
use vecsim_core::selfcheck;

/// Environment variable that overrides the config seed (the only
/// environment override).
const SEED_ENV_VAR: &str = "VECSIM_SEED";

#[derive(Parser)]
#[command(name = "vecsim", version, about = "Vehicular edge offloading simulator and MARL harness")]
struct Cli {
    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; beats the config file and VECSIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSVs, checkpoints, and manifests.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for sweeps; defaults to the logical core count.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Config override as dotted.key=value; repeatable, beats the file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Write a per-step trace CSV next to the other outputs.
    #[arg(long, global = true)]
    trace: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoint, metrics, and manifest.
    Train(TrainArgs),
    /// Evaluate a heuristic or a checkpoint and write a metrics row.
    Eval(EvalArgs),
    /// Run a parameter sweep over schemes, values, and seeds.
    Sweep(SweepArgs),
    /// Run the built-in oracle suites.
    Check,
    /// Dump per-link SINR tables for one seeded world.
    DumpSinr,
}

#[derive(Args)]
struct TrainArgs {
    /// Training epochs; overrides the config.
    #[arg(long)]
    epochs: Option<usize>,
    /// vdn or iql; overrides the config.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Heuristic policy: local-only, local-rsu, greedy, or random.
    #[arg(long, conflicts_with = "checkpoint")]
    policy: Option<String>,
    /// Checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluation episodes (rounded up to whole epochs).
    #[arg(long, default_value_t = 50)]
    episodes: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Swept variable: episodes, n-vehicles, platoon-size, platoon-count,
    /// or task-size.
    #[arg(long)]
    variable: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Evaluation episodes per cell.
    #[arg(long, default_value_t = 50)]
    eval_episodes: usize,
}

/// Error classes mapped to exit codes.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
    ChecksFailed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::ChecksFailed => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Validation(e) => eprintln!("error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::ChecksFailed => eprintln!("error: one or more checks failed"),
            }
            ExitCode::from(failure.code())
        }
    }
}

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve_config(&cli)?;
    let seed = cfg.scenario.seed;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))
        .map_err(runtime)?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    match &cli.command {
        Command::Train(args) => cmd_train(&cli, cfg, seed, args),
        Command::Eval(args) => cmd_eval(&cli, cfg, seed, args),
        Command::Sweep(args) => cmd_sweep(&cli, cfg, seed, args, jobs),
        Command::Check => cmd_check(),
        Command::DumpSinr => cmd_dump_sinr(&cli, cfg, seed),
    }
}

/// Load the config with precedence: built-in defaults < file < VECSIM_SEED
/// (seed only) < --override < --seed.
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            ConfigError::Io { .. } => validation(anyhow!("config file not found: {e}")),
            other => validation(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Ok(env_seed) = std::env::var(SEED_ENV_VAR) {
        let parsed: u64 = env_seed
            .parse()
            .map_err(|e| validation(anyhow!("{SEED_ENV_VAR} must be a u64: {e}")))?;
        cfg.scenario.seed = parsed;
    }
    if !cli.overrides.is_empty() {
        cfg = apply_overrides(&cfg, &cli.overrides).map_err(validation)?;
    }
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    cfg.validate().map_err(validation)?;
    Ok(cfg)
}

/// Apply dotted-path overrides onto the JSON form of the config. Only
/// existing keys can be overridden, so typos fail loudly.
fn apply_overrides(cfg: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value = serde_json::to_value(cfg)?;
    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{entry}' is not KEY=VALUE"))?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let pointer = format!("/{}", key.replace('.', "/"));
        match value.pointer_mut(&pointer) {
            Some(slot) => *slot = parsed,
            None => bail!("unknown config key '{key}'"),
        }
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).context("override produced an invalid config")?;
    Ok(cfg)
}

fn cmd_train(cli: &Cli, mut cfg: ExperimentConfig, seed: u64, args: &TrainArgs) -> Result<(), Failure> {
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(mode) = &args.mode {
        cfg.train.mode = match mode.as_str() {
            "vdn" => TrainMode::Vdn,
            "iql" => TrainMode::Iql,
            other => return Err(validation(anyhow!("unknown mode '{other}' (vdn|iql)"))),
        };
    }
    cfg.validate().map_err(validation)?;

    let started = std::time::Instant::now();
    let mut trace_writer = open_trace(cli, "train_trace.csv").map_err(runtime)?;
    let mut sink = trace_writer
        .as_mut()
        .map(|w| move |row: madrl::TraceRow| w.row(&row));
    let out = madrl::train(
        &cfg,
        seed,
        sink.as_mut().map(|f| f as &mut dyn FnMut(madrl::TraceRow)),
    )
    .map_err(|e| match e {
        madrl::TrainError::Invalid(_) => validation(e),
        other => runtime(other),
    })?;
    if let Some(w) = trace_writer {
        w.finish().map_err(runtime)?;
    }

    let ckpt = cli.out.join("checkpoint.ckpt");
    out.net.save(&ckpt).map_err(runtime)?;
    let metrics_path = cli.out.join("train_metrics.csv");
    experiments::write_train_metrics_csv(&metrics_path, &out.metrics).map_err(runtime)?;
    RunManifest::new("train", &cfg, seed, started.elapsed().as_secs_f64(), out.metrics.len())
        .write(&cli.out.join("manifest.json"))
        .map_err(runtime)?;

    let last = out.metrics.last();
    println!(
        "trained {} epochs ({:?}); final mean reward {:.4}, mean delay {:.4} s",
        out.metrics.len(),
        out.mode,
        last.map_or(0.0, |m| m.mean_reward),
        last.map_or(0.0, |m| m.mean_delay_s),
    );
    println!("checkpoint: {}", ckpt.display());
    println!("metrics:    {}", metrics_path.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, cfg: ExperimentConfig, seed: u64, args: &EvalArgs) -> Result<(), Failure> {
    let (policy, label) = match (&args.policy, &args.checkpoint) {
        (Some(name), None) => {
            let kind = parse_heuristic(name).map_err(validation)?;
            (Policy::Heuristic(kind), name.clone())
        }
        (None, Some(path)) => {
            let net = QNetwork::load(path).map_err(|e| match e {
                vecsim_core::nn::NnError::Io(_) => {
                    validation(anyhow!("checkpoint file not found: {}", path.display()))
                }
                other => validation(other),
            })?;
            (Policy::Net(net), "checkpoint".to_string())
        }
        _ => {
            return Err(validation(anyhow!(
                "eval needs exactly one of --policy or --checkpoint"
            )))
        }
    };

    let started = std::time::Instant::now();
    let mut trace_writer = open_trace(cli, "eval_trace.csv").map_err(runtime)?;
    let mut sink = trace_writer
        .as_mut()
        .map(|w| move |row: madrl::TraceRow| w.row(&row));
    let mut row = evaluate(
        &policy,
        &cfg,
        args.episodes,
        seed,
        sink.as_mut().map(|f| f as &mut dyn FnMut(madrl::TraceRow)),
    );
    if let Some(w) = trace_writer {
        w.finish().map_err(runtime)?;
    }
    row.scheme = label;
    row.variable = "eval".into();

    let path = cli.out.join("eval.csv");
    let body = format!("{METRICS_CSV_HEADER}\n{}\n", row.csv_line());
    std::fs::write(&path, body).map_err(|e| runtime(anyhow!("writing {}: {e}", path.display())))?;
    RunManifest::new("eval", &cfg, seed, started.elapsed().as_secs_f64(), 1)
        .write(&cli.out.join("manifest.json"))
        .map_err(runtime)?;
    println!(
        "{}: mean delay {:.6} s, mean cumulative reward {:.4}, violation rate {:.4}",
        row.scheme, row.mean_delay_s, row.mean_cum_reward, row.violation_rate
    );
    println!("row: {}", path.display());
    Ok(())
}

fn cmd_sweep(
    cli: &Cli,
    cfg: ExperimentConfig,
    seed: u64,
    args: &SweepArgs,
    jobs: usize,
) -> Result<(), Failure> {
    let variable = SweepVariable::from_str(&args.variable).map_err(|e| validation(anyhow!(e)))?;
    let schemes = args
        .schemes
        .iter()
        .map(|s| Scheme::from_str(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| validation(anyhow!(e)))?;
    let spec = SweepSpec {
        variable,
        values: args.values.clone(),
        schemes,
        seeds: args.seeds.clone(),
        base: cfg.clone(),
        eval_episodes: args.eval_episodes,
    };
    let started = std::time::Instant::now();
    let csv = cli.out.join("sweep.csv");
    let rows = run_sweep(&spec, &csv, jobs).map_err(|e| match e {
        experiments::SweepError::Invalid(_)
        | experiments::SweepError::Parse { .. }
        | experiments::SweepError::CorruptResume { .. } => validation(e),
        other => runtime(other),
    })?;
    RunManifest::new("sweep", &cfg, seed, started.elapsed().as_secs_f64(), rows.len())
        .write(&cli.out.join("manifest.json"))
        .map_err(runtime)?;

    println!("{} rows -> {}", rows.len(), csv.display());
    for line in compare_schemes(&rows) {
        println!(
            "{} {}={}: {} reward {:.4}, delay {:.6} s, delta vs first {:+.2}%",
            line.variable,
            line.variable,
            line.value,
            line.scheme,
            line.mean_cum_reward,
            line.mean_delay_s,
            line.reward_delta_pct_vs_first
        );
    }
    Ok(())
}

fn cmd_check() -> Result<(), Failure> {
    let results = selfcheck::run_all();
    let mut all_ok = true;
    for (name, result) in &results {
        match result {
            Ok(summary) => println!("[check] {name}: PASS ({summary})"),
            Err(diag) => {
                all_ok = false;
                println!("[check] {name}: FAIL ({diag})");
            }
        }
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

fn cmd_dump_sinr(cli: &Cli, cfg: ExperimentConfig, seed: u64) -> Result<(), Failure> {
    use std::io::Write;
    let (env, _) = VecEnv::reset(&cfg.scenario, &cfg.env, seed);
    let world = env.world();
    let ch = &cfg.scenario.channel;
    let mut rng = Stream::new(seed, Domain::Fading);
    let draws = DrawTable::draw(world, ch, &mut rng);

    // Loaded association: every vehicle uplinks to its nearest covering RSU.
    let mut loaded = AssociationMap::idle(world.vehicles.len());
    for v in &world.vehicles {
        if let Some(&rsu) = vecsim_core::offload::covering_rsus(world, v.id).first() {
            loaded.set(v.id, TxTarget::Rsu(rsu));
        }
    }
    let idle = AssociationMap::idle(world.vehicles.len());

    let path = cli.out.join("sinr.csv");
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&path).map_err(|e| runtime(anyhow!("{}: {e}", path.display())))?,
    );
    let sinr_of = |rate: f64| 2f64.powf(rate / ch.bandwidth_hz) - 1.0;
    writeln!(w, "link,tx,rx,distance_m,rate_idle_bps,sinr_idle,rate_loaded_bps,sinr_loaded")
        .map_err(|e| runtime(anyhow!("{e}")))?;
    for v in &world.vehicles {
        for r in &world.rsus {
            let (Some(ri), Some(rl)) = (
                rate_v2i(v.id, r.id, &idle, world, &draws, ch),
                rate_v2i(v.id, r.id, &loaded, world, &draws, ch),
            ) else {
                continue;
            };
            let d = vecsim_core::mobility::distance(v.position(), r.position());
            writeln!(w, "v2i,{},{},{},{},{},{},{}", v.id, r.id, d, ri, sinr_of(ri), rl, sinr_of(rl))
                .map_err(|e| runtime(anyhow!("{e}")))?;
        }
        for u in &world.vehicles {
            let (Some(ri), Some(rl)) = (
                rate_v2v(v.id, u.id, &idle, world, &draws, ch),
                rate_v2v(v.id, u.id, &loaded, world, &draws, ch),
            ) else {
                continue;
            };
            let d = vecsim_core::mobility::distance(v.position(), u.position());
            writeln!(w, "v2v,{},{},{},{},{},{},{}", v.id, u.id, d, ri, sinr_of(ri), rl, sinr_of(rl))
                .map_err(|e| runtime(anyhow!("{e}")))?;
        }
    }
    w.flush().map_err(|e| runtime(anyhow!("{e}")))?;
    println!("sinr table: {}", path.display());
    Ok(())
}

fn parse_heuristic(name: &str) -> Result<HeuristicKind> {
    Ok(match name {
        "local-only" => HeuristicKind::LocalOnly,
        "local-rsu" => HeuristicKind::LocalRsu,
        "greedy" => HeuristicKind::GreedyMinDelay,
        "random" => HeuristicKind::Random,
        other => bail!("unknown policy '{other}' (local-only|local-rsu|greedy|random)"),
    })
}

fn open_trace(cli: &Cli, name: &str) -> std::io::Result<Option<TraceWriter>> {
    if !cli.trace {
        return Ok(None);
    }
    TraceWriter::create(&cli.out.join(name)).map(Some)
}
