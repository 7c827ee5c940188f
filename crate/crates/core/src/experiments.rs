//! Experiment orchestration: policy evaluation, parameter sweeps, and CSV
//! reporting.
//!
//! Sweeps run a cross product of (scheme, variable value, seed) cells.
//! Cells are independent and execute on a bounded worker pool, but rows are
//! always appended to the output CSV in canonical order, so an interrupted
//! sweep leaves a canonical prefix and a resumed run reproduces the
//! uninterrupted file byte for byte. Wall-clock timings are recorded in the
//! run manifest, never in the metrics CSV, which keeps reruns of identical
//! `(config, seed)` byte-identical.

use crate::env::VecEnv;
use crate::madrl::{train, AgentWindows, HeuristicKind, Policy, TraceRow, TrainMode};
use crate::rng::{fold_seed, Domain, Stream};
use crate::scenario::{ExperimentConfig, PlatoonSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Evaluation exploration floor (matches the trained schedule's floor).
pub const EVAL_EPSILON: f64 = 0.05;

const EVAL_SEED_SALT: u64 = 0xE7A1;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("csv io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error at {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("existing rows in {path} do not form a canonical prefix of this sweep")]
    CorruptResume { path: String },
    #[error(transparent)]
    Train(#[from] crate::madrl::TrainError),
}

fn io_err(path: &Path, source: std::io::Error) -> SweepError {
    SweepError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An offloading scheme: a policy plus the environment toggles it assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LocalOnly,
    LocalRsu,
    GreedyMinDelay,
    Random,
    /// Value decomposition with platooning and task categorization.
    Vdn,
    /// Value decomposition without platooning or task categorization.
    VdnNovpNotc,
    /// Independent Q-learning with platooning and task categorization.
    Iql,
    /// Independent Q-learning without platooning or task categorization.
    IqlNovpNotc,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::LocalOnly,
        Scheme::LocalRsu,
        Scheme::GreedyMinDelay,
        Scheme::Random,
        Scheme::Vdn,
        Scheme::VdnNovpNotc,
        Scheme::Iql,
        Scheme::IqlNovpNotc,
    ];

    pub fn is_trained(self) -> bool {
        matches!(
            self,
            Scheme::Vdn | Scheme::VdnNovpNotc | Scheme::Iql | Scheme::IqlNovpNotc
        )
    }

    /// Specialize a base config to this scheme. The no-VP/no-TC ablations
    /// disable platoon offloading and task categorization but leave the
    /// scenario itself untouched, so every scheme runs on identical worlds
    /// and comparisons are paired. Learned schemes set the training mode.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            Scheme::VdnNovpNotc | Scheme::IqlNovpNotc => {
                cfg.env.platoon_offloading = false;
                cfg.env.task_categorization = false;
            }
            _ => {}
        }
        match self {
            Scheme::Vdn | Scheme::VdnNovpNotc => cfg.train.mode = TrainMode::Vdn,
            Scheme::Iql | Scheme::IqlNovpNotc => cfg.train.mode = TrainMode::Iql,
            _ => {}
        }
        cfg
    }

    pub fn heuristic(self) -> Option<HeuristicKind> {
        match self {
            Scheme::LocalOnly => Some(HeuristicKind::LocalOnly),
            Scheme::LocalRsu => Some(HeuristicKind::LocalRsu),
            Scheme::GreedyMinDelay => Some(HeuristicKind::GreedyMinDelay),
            Scheme::Random => Some(HeuristicKind::Random),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scheme::LocalOnly => "local-only",
            Scheme::LocalRsu => "local-rsu",
            Scheme::GreedyMinDelay => "greedy",
            Scheme::Random => "random",
            Scheme::Vdn => "vdn",
            Scheme::VdnNovpNotc => "vdn-novp-notc",
            Scheme::Iql => "iql",
            Scheme::IqlNovpNotc => "iql-novp-notc",
        };
        f.write_str(name)
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Training epoch budget.
    Episodes,
    NVehicles,
    /// Members per platoon, two platoons.
    PlatoonSize,
    /// Number of platoons sharing twelve members.
    PlatoonCount,
    /// Task size in bits.
    TaskSizeLambda,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepVariable::Episodes => "episodes",
            SweepVariable::NVehicles => "n-vehicles",
            SweepVariable::PlatoonSize => "platoon-size",
            SweepVariable::PlatoonCount => "platoon-count",
            SweepVariable::TaskSizeLambda => "task-size",
        };
        f.write_str(name)
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SweepVariable::Episodes,
            SweepVariable::NVehicles,
            SweepVariable::PlatoonSize,
            SweepVariable::PlatoonCount,
            SweepVariable::TaskSizeLambda,
        ]
        .into_iter()
        .find(|v| v.to_string() == s)
        .ok_or_else(|| format!("unknown sweep variable '{s}'"))
    }
}

/// Apply one sweep value to a config.
pub fn apply_variable(
    cfg: &mut ExperimentConfig,
    variable: SweepVariable,
    value: f64,
) -> Result<(), SweepError> {
    match variable {
        SweepVariable::Episodes => {
            let epochs = value as usize;
            if epochs == 0 {
                return Err(SweepError::Invalid("episodes value must be >= 1".into()));
            }
            cfg.train.epochs = epochs;
        }
        SweepVariable::NVehicles => {
            cfg.scenario.n_vehicles = value as usize;
        }
        SweepVariable::PlatoonSize => {
            let members = value as usize;
            if members == 0 {
                return Err(SweepError::Invalid("platoon size must be >= 1".into()));
            }
            let span = 10.0 * (members.saturating_sub(1)) as f64;
            cfg.scenario.platoons = vec![
                PlatoonSpec { members, span_m: span },
                PlatoonSpec { members, span_m: span },
            ];
        }
        SweepVariable::PlatoonCount => {
            let count = value as usize;
            const POOLED_MEMBERS: usize = 12;
            if count == 0 || POOLED_MEMBERS % count != 0 {
                return Err(SweepError::Invalid(format!(
                    "platoon count must divide {POOLED_MEMBERS}, got {count}"
                )));
            }
            let members = POOLED_MEMBERS / count;
            let span = 10.0 * (members.saturating_sub(1)) as f64;
            cfg.scenario.platoons = (0..count)
                .map(|_| PlatoonSpec { members, span_m: span })
                .collect();
        }
        SweepVariable::TaskSizeLambda => {
            cfg.scenario.task.size_bits = value;
        }
    }
    cfg.validate()
        .map_err(|e| SweepError::Invalid(e.to_string()))
}

/// One sweep: a cross product over schemes, variable values, and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub base: ExperimentConfig,
    /// Evaluation episodes per cell.
    pub eval_episodes: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::Invalid("values must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(SweepError::Invalid("schemes must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(SweepError::Invalid("seeds must not be empty".into()));
        }
        if self.eval_episodes == 0 {
            return Err(SweepError::Invalid("eval_episodes must be >= 1".into()));
        }
        Ok(())
    }

    /// Cells in canonical order: scheme-major, then value, then seed.
    pub fn cells(&self) -> Vec<(Scheme, f64, u64)> {
        let mut cells = Vec::new();
        for &scheme in &self.schemes {
            for &value in &self.values {
                for &seed in &self.seeds {
                    cells.push((scheme, value, seed));
                }
            }
        }
        cells
    }
}

/// Aggregated evaluation result for one (scheme, value, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scheme: String,
    pub variable: String,
    pub value: f64,
    pub seed: u64,
    /// Mean over epochs of the summed instantaneous global reward.
    pub mean_cum_reward: f64,
    /// Mean realized delay per task, seconds.
    pub mean_delay_s: f64,
    /// Fraction of tasks with a deadline or capacity violation.
    pub violation_rate: f64,
    /// Wall time of the cell; manifest-only, excluded from the CSV.
    pub wall_time_s: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "scheme,variable,value,seed,mean_cum_reward,mean_delay_s,violation_rate";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.scheme,
            self.variable,
            self.value,
            self.seed,
            self.mean_cum_reward,
            self.mean_delay_s,
            self.violation_rate
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, String> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(format!("expected 7 columns, got {}", parts.len()));
        }
        Ok(MetricsRow {
            scheme: parts[0].to_string(),
            variable: parts[1].to_string(),
            value: parts[2].parse().map_err(|e| format!("value: {e}"))?,
            seed: parts[3].parse().map_err(|e| format!("seed: {e}"))?,
            mean_cum_reward: parts[4].parse().map_err(|e| format!("reward: {e}"))?,
            mean_delay_s: parts[5].parse().map_err(|e| format!("delay: {e}"))?,
            violation_rate: parts[6].parse().map_err(|e| format!("violations: {e}"))?,
            wall_time_s: 0.0,
        })
    }

    fn key(&self) -> (String, String, String, u64) {
        (
            self.scheme.clone(),
            self.variable.clone(),
            format!("{}", self.value),
            self.seed,
        )
    }
}

/// Evaluate a policy for at least `episodes` episodes (rounded up to whole
/// epochs) at the evaluation exploration floor. Deterministic per
/// `(policy, config, seed)`.
pub fn evaluate(
    policy: &Policy,
    cfg: &ExperimentConfig,
    episodes: usize,
    seed: u64,
    mut trace: Option<&mut dyn FnMut(TraceRow)>,
) -> MetricsRow {
    let t_max = cfg.scenario.episodes_per_epoch.max(1);
    let epochs = episodes.div_ceil(t_max);
    let dims = cfg.train.net_dims();
    let mut rng = Stream::derive(seed, Domain::Exploration, EVAL_SEED_SALT);

    let mut cum_rewards = Vec::with_capacity(epochs);
    let mut delay_sum = 0.0;
    let mut task_count = 0usize;
    let mut violated_tasks = 0usize;

    for epoch in 0..epochs {
        let env_seed = fold_seed(fold_seed(seed, EVAL_SEED_SALT), epoch as u64);
        let (mut env, obs0) = VecEnv::reset(&cfg.scenario, &cfg.env, env_seed);
        let n_agents = env.n_agents();
        let mut windows = AgentWindows::new(n_agents, dims);
        windows.push(&obs0);
        let mut epoch_r_tot = 0.0;
        loop {
            let actions: Vec<usize> = (0..n_agents)
                .map(|k| policy.act(&env, k, windows.flat(k), EVAL_EPSILON, &mut rng))
                .collect();
            let info = env.step(&actions).expect("arity matches agent count");
            if let Some(f) = trace.as_mut() {
                for (agent, decision) in info.decisions.iter().enumerate() {
                    let Some(d) = decision else { continue };
                    f(TraceRow {
                        epoch,
                        episode: env.episode().wrapping_sub(1),
                        agent,
                        action: d.to_string(),
                        delay_s: info.delays[agent].unwrap_or(0.0),
                        reward: info.rewards[agent],
                        deadline_violations: info.deadline_violations,
                        capacity_violations: info.capacity_violations,
                        max_rsu_served: info.max_rsu_served,
                    });
                }
            }
            windows.push(&info.observations);
            epoch_r_tot += info.r_tot;
            delay_sum += info.delays.iter().flatten().sum::<f64>();
            task_count += info.delays.iter().flatten().count();
            violated_tasks += info.violated.iter().filter(|&&v| v).count();
            if info.done {
                break;
            }
        }
        cum_rewards.push(epoch_r_tot);
    }

    MetricsRow {
        scheme: String::new(),
        variable: String::new(),
        value: 0.0,
        seed,
        mean_cum_reward: cum_rewards.iter().sum::<f64>() / cum_rewards.len().max(1) as f64,
        mean_delay_s: delay_sum / task_count.max(1) as f64,
        violation_rate: violated_tasks as f64 / task_count.max(1) as f64,
        wall_time_s: 0.0,
    }
}

/// Train (when the scheme is learned) and evaluate one sweep cell.
pub fn run_cell(
    spec: &SweepSpec,
    scheme: Scheme,
    value: f64,
    seed: u64,
) -> Result<MetricsRow, SweepError> {
    let started = std::time::Instant::now();
    let mut cfg = scheme.apply(&spec.base);
    apply_variable(&mut cfg, spec.variable, value)?;
    let policy = match scheme.heuristic() {
        Some(kind) => Policy::Heuristic(kind),
        None => {
            let out = train(&cfg, seed, None)?;
            Policy::Net(out.net)
        }
    };
    let mut row = evaluate(&policy, &cfg, spec.eval_episodes, seed, None);
    row.scheme = scheme.to_string();
    row.variable = spec.variable.to_string();
    row.value = value;
    row.wall_time_s = started.elapsed().as_secs_f64();
    Ok(row)
}

fn read_existing_rows(path: &Path) -> Result<Vec<MetricsRow>, SweepError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_CSV_HEADER => {}
        Some(h) => {
            return Err(SweepError::Parse {
                path: path.display().to_string(),
                reason: format!("unexpected header '{h}'"),
            })
        }
        None => return Ok(Vec::new()),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            MetricsRow::parse_csv_line(l).map_err(|reason| SweepError::Parse {
                path: path.display().to_string(),
                reason,
            })
        })
        .collect()
}

/// Parse a metrics CSV written by [`run_sweep`] or the CLI.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, SweepError> {
    read_existing_rows(path)
}

/// Execute a sweep, appending rows to `out_csv` in canonical cell order.
/// Finished cells already present in the file are skipped, so interrupted
/// sweeps resume to a byte-identical final CSV. Cells run on a pool of
/// `jobs` workers in canonical-order chunks.
pub fn run_sweep(spec: &SweepSpec, out_csv: &Path, jobs: usize) -> Result<Vec<MetricsRow>, SweepError> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs = jobs.max(1);

    let mut done: Vec<MetricsRow> = if out_csv.exists() {
        read_existing_rows(out_csv)?
    } else {
        Vec::new()
    };
    // Completed rows must be exactly the canonical prefix.
    if done.len() > cells.len() {
        return Err(SweepError::CorruptResume {
            path: out_csv.display().to_string(),
        });
    }
    for (row, &(scheme, value, seed)) in done.iter().zip(&cells) {
        let expected = (
            scheme.to_string(),
            spec.variable.to_string(),
            format!("{value}"),
            seed,
        );
        if row.key() != expected {
            return Err(SweepError::CorruptResume {
                path: out_csv.display().to_string(),
            });
        }
    }

    let fresh = done.is_empty() && !out_csv.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_csv)
        .map_err(|e| io_err(out_csv, e))?;
    if fresh {
        writeln!(file, "{METRICS_CSV_HEADER}").map_err(|e| io_err(out_csv, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SweepError::Invalid(format!("worker pool: {e}")))?;

    let remaining = &cells[done.len()..];
    for chunk in remaining.chunks(jobs) {
        let results: Vec<Result<MetricsRow, SweepError>> = pool.install(|| {
            use rayon::prelude::*;
            chunk
                .par_iter()
                .map(|&(scheme, value, seed)| run_cell(spec, scheme, value, seed))
                .collect()
        });
        for result in results {
            let row = result?;
            writeln!(file, "{}", row.csv_line()).map_err(|e| io_err(out_csv, e))?;
            file.flush().map_err(|e| io_err(out_csv, e))?;
            done.push(row);
        }
    }
    Ok(done)
}

/// One line of a scheme ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variable: String,
    pub value: f64,
    pub scheme: String,
    /// Mean cumulative reward over seeds.
    pub mean_cum_reward: f64,
    /// Mean delay over seeds.
    pub mean_delay_s: f64,
    /// Percent by which the first-listed scheme's reward improves on this
    /// one: `(first - this) / |this| * 100`; zero for the first scheme.
    pub reward_delta_pct_vs_first: f64,
}

/// Per-cell means over seeds and percentage deltas versus the first-listed
/// scheme, preserving first-appearance scheme order.
pub fn compare_schemes(rows: &[MetricsRow]) -> Vec<ComparisonRow> {
    let mut scheme_order: Vec<String> = Vec::new();
    for r in rows {
        if !scheme_order.contains(&r.scheme) {
            scheme_order.push(r.scheme.clone());
        }
    }
    let mut cell_values: Vec<(String, f64)> = Vec::new();
    for r in rows {
        let key = (r.variable.clone(), r.value);
        if !cell_values.contains(&key) {
            cell_values.push(key);
        }
    }

    let mut out = Vec::new();
    for (variable, value) in cell_values {
        let mut first_reward = None;
        for scheme in &scheme_order {
            let cell: Vec<&MetricsRow> = rows
                .iter()
                .filter(|r| r.scheme == *scheme && r.variable == variable && r.value == value)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len() as f64;
            let reward = cell.iter().map(|r| r.mean_cum_reward).sum::<f64>() / n;
            let delay = cell.iter().map(|r| r.mean_delay_s).sum::<f64>() / n;
            let delta = match first_reward {
                None => {
                    first_reward = Some(reward);
                    0.0
                }
                Some(first) => {
                    if reward == first {
                        0.0
                    } else {
                        (first - reward) / reward.abs().max(f64::MIN_POSITIVE) * 100.0
                    }
                }
            };
            out.push(ComparisonRow {
                variable: variable.clone(),
                value,
                scheme: scheme.clone(),
                mean_cum_reward: reward,
                mean_delay_s: delay,
                reward_delta_pct_vs_first: delta,
            });
        }
    }
    out
}

/// Append-style CSV writer for per-step trace rows.
pub struct TraceWriter {
    w: std::io::BufWriter<std::fs::File>,
}

pub const TRACE_CSV_HEADER: &str =
    "epoch,episode,agent,action,delay_s,reward,deadline_violations,capacity_violations,max_rsu_served";

impl TraceWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        Ok(TraceWriter { w })
    }

    pub fn row(&mut self, r: &TraceRow) {
        writeln!(
            self.w,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.episode,
            r.agent,
            r.action,
            r.delay_s,
            r.reward,
            r.deadline_violations,
            r.capacity_violations,
            r.max_rsu_served
        )
        .expect("trace write");
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}

/// Write per-epoch training metrics with the documented stable columns.
pub const TRAIN_CSV_HEADER: &str = "epoch,mean_reward,mean_delay_s,violations,epsilon";

pub fn write_train_metrics_csv(
    path: &Path,
    metrics: &[crate::madrl::EpochMetrics],
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TRAIN_CSV_HEADER}")?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{}",
            m.epoch, m.mean_reward, m.mean_delay_s, m.violations, m.epsilon
        )?;
    }
    w.flush()
}

/// FNV-1a over a byte slice; used to fingerprint configs in manifests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Provenance record written next to every artifact-producing run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_fnv1a: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub rows: usize,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, seed: u64, wall_time_s: f64, rows: usize) -> Self {
        let raw = serde_json::to_string(cfg).unwrap_or_default();
        RunManifest {
            schema_version: 1,
            command: command.to_string(),
            seed,
            config_fnv1a: format!("{:016x}", fnv1a(raw.as_bytes())),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            rows,
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }
}
