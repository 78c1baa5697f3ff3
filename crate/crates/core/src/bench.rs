//! Replication benchmarks: many seeded runs per method, probability of
//! correct selection against budget, stopping-time summaries, the
//! lower-bound report and CSV/JSONL export.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::divergence::bern_kl_binary;
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::rng::derive_seed;
use crate::sampler::{run_simulated, ExperimentConfig, ExperimentOutcome, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// `p +- z sqrt(p (1 - p) / n)`.
    #[default]
    Normal,
    /// Wilson score interval, better behaved for small `n` or extreme `p`.
    Wilson,
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Self::Normal),
            "wilson" => Ok(Self::Wilson),
            other => Err(Error::InvalidArgument(format!("unknown CI method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub reps: usize,
    /// PCS is recorded at every multiple of `grid_step` up to the budget cap.
    pub grid_step: u64,
    pub base_seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub ci: CiMethod,
    pub ci_level: f64,
    /// Largest tolerated fraction of failed replications per method.
    pub max_failure_rate: f64,
    /// Template for every run; `method`, `seed` and `checkpoints` are set
    /// per replication.
    pub experiment: ExperimentConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            reps: 200,
            grid_step: 500,
            base_seed: 0,
            workers: 0,
            ci: CiMethod::Normal,
            ci_level: 0.95,
            max_failure_rate: 0.05,
            experiment: ExperimentConfig::default(),
        }
    }
}

impl BenchConfig {
    /// Budgets at which PCS is evaluated.
    pub fn grid(&self) -> Vec<u64> {
        let cap = self.experiment.budget_cap;
        let step = self.grid_step.max(1);
        let mut grid: Vec<u64> = (1..).map(|m| m * step).take_while(|&b| b <= cap).collect();
        if grid.last() != Some(&cap) {
            grid.push(cap);
        }
        grid
    }

    /// Seed of replication `rep`, shared by all methods.
    pub fn seed(&self, rep: usize) -> u64 {
        derive_seed(self.base_seed, rep as u64)
    }

    fn z(&self) -> Result<f64> {
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!("CI level {} must be in (0, 1)", self.ci_level)));
        }
        Ok(Normal::standard().inverse_cdf(0.5 * (1.0 + self.ci_level)))
    }
}

/// One replication as written to `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub tau: Option<u64>,
    pub stopped: Option<bool>,
    pub recommended: Option<usize>,
    pub correct: Option<bool>,
    pub error: Option<String>,
    #[serde(skip)]
    pub checkpoints: Vec<usize>,
}

impl RunRecord {
    fn new(method: Method, rep: usize, seed: u64, result: Result<ExperimentOutcome>) -> Self {
        match result {
            Ok(o) => Self {
                method,
                rep,
                seed,
                tau: Some(o.tau),
                stopped: Some(o.stopped),
                recommended: Some(o.recommended),
                correct: o.correct,
                error: None,
                checkpoints: o.checkpoints,
            },
            Err(e) => Self {
                method,
                rep,
                seed,
                tau: None,
                stopped: None,
                recommended: None,
                correct: None,
                error: Some(e.to_string()),
                checkpoints: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcsPoint {
    pub budget: u64,
    pub pcs: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingSummary {
    /// Mean stopping time over runs that stopped before the cap.
    pub mean_tau: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub median_tau: f64,
    /// Fraction of successful runs that stopped with a wrong recommendation.
    pub error_rate: f64,
    pub stopped: usize,
    pub capped: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub runs: Vec<RunRecord>,
    pub pcs: Vec<PcsPoint>,
    pub stopping: StoppingSummary,
}

/// Mean stopping time against the instance complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub method: Method,
    pub mean_tau: f64,
    /// Characteristic time (unstructured) or surrogate complexity
    /// (structured).
    pub complexity: f64,
    pub kl_delta: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub truth: usize,
    /// `characteristic` or `surrogate`.
    pub complexity_kind: String,
    pub complexity: f64,
    pub methods: Vec<MethodResult>,
    pub lower_bound: Vec<LowerBoundRow>,
}

impl BenchResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Confidence interval of a proportion.
pub fn proportion_ci(p: f64, n: usize, z: f64, method: CiMethod) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    match method {
        CiMethod::Normal => {
            let half = z * (p * (1.0 - p) / n).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        }
        CiMethod::Wilson => {
            let z2 = z * z;
            let denom = 1.0 + z2 / n;
            let center = (p + z2 / (2.0 * n)) / denom;
            let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
            ((center - half).max(0.0), (center + half).min(1.0))
        }
    }
}

/// Mean with a normal-approximation interval `mean +- z s / sqrt(n)`.
pub fn mean_ci(values: &[f64], z: f64) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let half = z * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn summarise(method: Method, runs: Vec<RunRecord>, truth: usize, grid: &[u64], z: f64, ci: CiMethod) -> MethodResult {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.error.is_none()).collect();
    let n = ok.len();
    let pcs = grid
        .iter()
        .enumerate()
        .map(|(g, &budget)| {
            let hits = ok.iter().filter(|r| r.checkpoints.get(g) == Some(&truth)).count();
            let p = if n > 0 { hits as f64 / n as f64 } else { f64::NAN };
            let (ci_lo, ci_hi) = proportion_ci(p, n, z, ci);
            PcsPoint { budget, pcs: p, ci_lo, ci_hi }
        })
        .collect();
    let taus: Vec<f64> = ok
        .iter()
        .filter(|r| r.stopped == Some(true))
        .map(|r| r.tau.expect("successful run") as f64)
        .collect();
    let (mean_tau, ci_lo, ci_hi) = mean_ci(&taus, z);
    let wrong = ok
        .iter()
        .filter(|r| r.stopped == Some(true) && r.correct == Some(false))
        .count();
    let stopping = StoppingSummary {
        mean_tau,
        ci_lo,
        ci_hi,
        median_tau: median(&taus),
        error_rate: if n > 0 { wrong as f64 / n as f64 } else { f64::NAN },
        stopped: taus.len(),
        capped: n - taus.len(),
        failed: runs.len() - n,
    };
    MethodResult {
        method,
        runs,
        pcs,
        stopping,
    }
}

/// Runs `config.reps` seeded replications of every method on `instance`.
///
/// Replication `r` uses the seed `derive_seed(base_seed, r)` for every
/// method and results are merged in replication order, so the output does
/// not depend on the worker count.
pub fn bench(instance: &Instance, config: &BenchConfig) -> Result<BenchResult> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    let z = config.z()?;
    let grid = config.grid();
    let truth = instance.best_policy();
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.reps).map(move |r| (m, r)))
        .collect();
    let run = |&(method, rep): &(Method, usize)| {
        let seed = config.seed(rep);
        let cfg = ExperimentConfig {
            method,
            seed,
            checkpoints: grid.clone(),
            ..config.experiment.clone()
        };
        RunRecord::new(method, rep, seed, run_simulated(instance, &cfg, None))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| jobs.par_iter().map(run).collect());

    let mut methods = Vec::with_capacity(config.methods.len());
    let mut records = records.into_iter();
    for &method in &config.methods {
        let runs: Vec<RunRecord> = records.by_ref().take(config.reps).collect();
        let result = summarise(method, runs, truth, &grid, z, config.ci);
        let failed = result.stopping.failed;
        if failed as f64 > config.max_failure_rate * config.reps as f64 {
            return Err(Error::BenchFailed {
                method: method.to_string(),
                failed,
                reps: config.reps,
            });
        }
        methods.push(result);
    }

    let (complexity_kind, complexity) = complexity(instance)?;
    let delta = config.experiment.delta;
    let kl_delta = bern_kl_binary(delta, 1.0 - delta);
    let lower_bound = methods
        .iter()
        .map(|m| LowerBoundRow {
            method: m.method,
            mean_tau: m.stopping.mean_tau,
            complexity,
            kl_delta,
            ratio: m.stopping.mean_tau / (complexity * kl_delta),
        })
        .collect();
    Ok(BenchResult {
        config: config.clone(),
        truth,
        complexity_kind: complexity_kind.to_string(),
        complexity,
        methods,
        lower_bound,
    })
}

fn complexity(instance: &Instance) -> Result<(&'static str, f64)> {
    match instance {
        Instance::Unstructured(mu) => Ok(("characteristic", crate::unstructured::characteristic_time(mu)?)),
        Instance::Structured(m) => Ok(("surrogate", crate::design::surrogate_time(m.theta(), m.features())?)),
    }
}

pub const PCS_FILE: &str = "pcs.csv";
pub const STOPPING_FILE: &str = "stopping.csv";
pub const LOWER_BOUND_FILE: &str = "lower_bound.csv";
pub const RUNS_FILE: &str = "runs.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsRow {
    pub method: Method,
    pub budget: u64,
    pub pcs: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Serialize)]
struct StoppingRow {
    method: Method,
    mean_tau: f64,
    ci_lo: f64,
    ci_hi: f64,
    median_tau: f64,
    error_rate: f64,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    bench: &'a BenchConfig,
    truth: usize,
    complexity_kind: &'a str,
    complexity: f64,
    grid: Vec<u64>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes `pcs.csv`, `stopping.csv`, `lower_bound.csv`, `runs.jsonl` and
/// `config.json` into `dir`, creating it if needed.
pub fn export(result: &BenchResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let pcs_path = dir.join(PCS_FILE);
    let mut w = csv_writer(&pcs_path)?;
    for m in &result.methods {
        for p in &m.pcs {
            w.serialize(PcsRow {
                method: m.method,
                budget: p.budget,
                pcs: p.pcs,
                ci_lo: p.ci_lo,
                ci_hi: p.ci_hi,
            })
            .map_err(|e| csv_error(&pcs_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&pcs_path, e))?;

    let stop_path = dir.join(STOPPING_FILE);
    let mut w = csv_writer(&stop_path)?;
    for m in &result.methods {
        let s = &m.stopping;
        w.serialize(StoppingRow {
            method: m.method,
            mean_tau: s.mean_tau,
            ci_lo: s.ci_lo,
            ci_hi: s.ci_hi,
            median_tau: s.median_tau,
            error_rate: s.error_rate,
        })
        .map_err(|e| csv_error(&stop_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&stop_path, e))?;

    let lb_path = dir.join(LOWER_BOUND_FILE);
    let mut w = csv_writer(&lb_path)?;
    for row in &result.lower_bound {
        w.serialize(row).map_err(|e| csv_error(&lb_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&lb_path, e))?;

    let runs_path = dir.join(RUNS_FILE);
    let file = File::create(&runs_path).map_err(|e| Error::io(&runs_path, e))?;
    let mut w = BufWriter::new(file);
    for m in &result.methods {
        for r in &m.runs {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::json(&runs_path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(&runs_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&runs_path, e))?;

    let config_path = dir.join(CONFIG_FILE);
    let echo = ConfigEcho {
        bench: &result.config,
        truth: result.truth,
        complexity_kind: &result.complexity_kind,
        complexity: result.complexity,
        grid: result.config.grid(),
    };
    let text = serde_json::to_string_pretty(&echo).map_err(|e| Error::json(&config_path, e))?;
    fs::write(&config_path, text + "\n").map_err(|e| Error::io(&config_path, e))?;

    Ok(vec![pcs_path, stop_path, lb_path, runs_path, config_path])
}

/// Reads a `pcs.csv` written by [`export`].
pub fn read_pcs(path: impl AsRef<Path>) -> Result<Vec<PcsRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<PcsRow>, _>>()
        .map_err(|e| csv_error(path, e))
}
