//! Command-line front end: generate instances, inspect optimal allocations,
//! run single experiments and replicate benchmarks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use prefbai::bench::{bench, export, BenchConfig, CiMethod};
use prefbai::design::{solve_allocation, surrogate_time, BetaThreshold};
use prefbai::estimation::lambda_schedule;
use prefbai::instances::{StructuredGenerator, UnstructuredGenerator};
use prefbai::judge::ExternalJudge;
use prefbai::linalg::SymMatrix;
use prefbai::sampler::{run_experiment, run_simulated, Setting, Tracking};
use prefbai::unstructured::{characteristic_time, lower_bound_samples, optimal_allocation};
use prefbai::{Allocation, ExperimentConfig, Instance, Method, RngState, ThresholdMode};

#[derive(Parser)]
#[command(name = "prefbai", version, about = "Best-policy identification from pairwise preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance as JSON.
    Gen(GenArgs),
    /// Print the optimal allocation and complexity of an instance.
    Allocate(AllocateArgs),
    /// Run one experiment against a simulated or external judge.
    Run(RunArgs),
    /// Replicate experiments for several methods and export the summaries.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Unstructured,
    Structured,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "unstructured")]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of policies.
    #[arg(long)]
    k: Option<usize>,
    /// Feature dimension (structured).
    #[arg(long)]
    d: Option<usize>,
    /// Score of policy 0 (unstructured).
    #[arg(long)]
    top: Option<f64>,
    /// Score drop from the first to the last policy (unstructured).
    #[arg(long)]
    span: Option<f64>,
    /// Standard deviation of the score or feature noise.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Highest base score (structured).
    #[arg(long)]
    score_hi: Option<f64>,
    /// Lowest base score (structured).
    #[arg(long)]
    score_lo: Option<f64>,
}

#[derive(Args)]
struct AllocateArgs {
    /// Instance JSON.
    instance: PathBuf,
    /// Use the structured design program (requires a structured instance).
    #[arg(long)]
    structured: bool,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Design regularisation weight.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Budgets at which the structured threshold is sampled, assuming the
    /// comparison counts follow the allocation.
    #[arg(long, value_delimiter = ',', default_values_t = [1000u64, 3000, 10000, 30000])]
    t_grid: Vec<u64>,
}

/// Experiment settings; each flag overrides the matching config field.
#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n0: Option<u64>,
    #[arg(long)]
    c_prime: Option<f64>,
    #[arg(long)]
    budget_cap: Option<u64>,
    #[arg(long)]
    threshold_mode: Option<ThresholdMode>,
    #[arg(long)]
    tracking: Option<Tracking>,
    #[arg(long)]
    threshold_c: Option<f64>,
    #[arg(long)]
    design_every: Option<u64>,
    #[arg(long)]
    check_every: Option<u64>,
    #[arg(long)]
    refit_every: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rucb_alpha: Option<f64>,
    #[arg(long)]
    bound_b: Option<f64>,
    #[arg(long)]
    gamma_scale: Option<f64>,
    #[arg(long)]
    gamma_relative: Option<bool>,
    #[arg(long)]
    a0_join_best: Option<bool>,
    /// JSON file with a full config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ExperimentArgs {
    fn build(&self) -> prefbai::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| prefbai::Error::InvalidArgument(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| prefbai::Error::InvalidArgument(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$field = v; })*
            };
        }
        set!(
            delta,
            n0,
            c_prime,
            budget_cap,
            threshold_mode,
            tracking,
            threshold_c,
            design_every,
            check_every,
            refit_every,
            epsilon,
            rucb_alpha,
            gamma_scale,
            gamma_relative,
            a0_join_best
        );
        if self.bound_b.is_some() {
            c.bound_b = self.bound_b;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Instance JSON. Supplies the ground truth for the simulated judge and
    /// the policy set (and features) for an external one.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Number of policies for an unstructured run against an external judge
    /// without an instance file.
    #[arg(long, conflicts_with = "instance")]
    k: Option<usize>,
    #[arg(long, default_value = "llm-po")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a JSONL trace, one line per comparison.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Shell command of an external judge speaking the JSON line protocol.
    #[arg(long)]
    judge_cmd: Option<String>,
    /// External judge timeout in seconds.
    #[arg(long, default_value_t = 60)]
    judge_timeout: u64,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance JSON.
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated methods; all six by default.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 500)]
    grid_step: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Wilson intervals for proportions instead of the normal approximation.
    #[arg(long)]
    wilson: bool,
    #[arg(long, default_value_t = 0.05)]
    max_failure_rate: f64,
    /// Output directory for the CSV/JSONL exports.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> prefbai::Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Allocate(a) => allocate(a),
        Command::Run(a) => run(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn gen(a: GenArgs) -> prefbai::Result<()> {
    let mut rng = RngState::from_seed(a.seed);
    let instance = match a.kind {
        Kind::Unstructured => {
            let mut g = UnstructuredGenerator::default();
            g.k = a.k.unwrap_or(g.k);
            g.top = a.top.unwrap_or(g.top);
            g.span = a.span.unwrap_or(g.span);
            g.noise_sd = a.noise_sd.unwrap_or(g.noise_sd);
            Instance::Unstructured(g.generate(&mut rng)?)
        }
        Kind::Structured => {
            let mut g = StructuredGenerator::default();
            g.k = a.k.unwrap_or(g.k);
            g.d = a.d.unwrap_or(g.d);
            g.score_hi = a.score_hi.unwrap_or(g.score_hi);
            g.score_lo = a.score_lo.unwrap_or(g.score_lo);
            g.noise_sd = a.noise_sd.unwrap_or(g.noise_sd);
            Instance::Structured(g.generate(&mut rng)?)
        }
    };
    match a.out {
        Some(path) => instance.write(path),
        None => {
            println!("{}", instance.to_json());
            Ok(())
        }
    }
}

fn support(a: &Allocation) -> Vec<serde_json::Value> {
    a.support()
        .into_iter()
        .map(|(p, w)| json!({ "i": p.i, "j": p.j, "weight": w }))
        .collect()
}

fn allocate(a: AllocateArgs) -> prefbai::Result<()> {
    let instance = Instance::read(&a.instance)?;
    let out = match (&instance, a.structured) {
        (Instance::Unstructured(mu), false) => {
            let alloc = optimal_allocation(mu)?;
            json!({
                "best": mu.best_policy(),
                "allocation": support(&alloc),
                "characteristic_time": characteristic_time(mu)?,
                "lower_bound": lower_bound_samples(mu, a.delta)?,
                "delta": a.delta,
            })
        }
        (Instance::Structured(m), _) => {
            let alloc = solve_allocation(m.theta(), m.features(), a.gamma)?;
            let mut grid = a.t_grid.clone();
            grid.sort_unstable();
            grid.dedup();
            let Setting::Structured { bound_b, bound_l, .. } = Setting::structured(m, None) else {
                unreachable!("structured model gives a structured setting")
            };
            let beta = beta_samples(&alloc, m.features(), bound_b, bound_l, a.delta, &grid)?;
            json!({
                "best": m.best_policy(),
                "allocation": support(&alloc),
                "surrogate_time": surrogate_time(m.theta(), m.features())?,
                "gamma": a.gamma,
                "delta": a.delta,
                "beta": beta,
            })
        }
        (Instance::Unstructured(_), true) => {
            return Err(prefbai::Error::InvalidArgument(
                "--structured needs a structured instance".into(),
            ))
        }
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON value serializes"));
    Ok(())
}

/// Threshold values along `grid` when the comparison counts equal
/// `t * omega`; the eigenvalue gate is calibrated at the first grid point.
fn beta_samples(
    alloc: &Allocation,
    features: &[Vec<f64>],
    bound_b: f64,
    bound_l: f64,
    delta: f64,
    grid: &[u64],
) -> prefbai::Result<Vec<serde_json::Value>> {
    let Some(&t0) = grid.first() else {
        return Ok(Vec::new());
    };
    let d = features[0].len();
    let diffs: Vec<(f64, Vec<f64>)> = alloc
        .support()
        .into_iter()
        .map(|(p, w)| (w, features[p.i].iter().zip(&features[p.j]).map(|(a, b)| a - b).collect()))
        .collect();
    let gram = |t: u64| {
        let mut v = SymMatrix::zeros(d);
        for (w, z) in &diffs {
            v.add_outer(t as f64 * w, z);
        }
        v
    };
    let c = 0.5 * gram(t0).min_eigenvalue() / (t0 as f64).sqrt();
    if !(c > 0.0) {
        return Err(prefbai::Error::InvalidArgument(
            "the allocation does not span the feature space; no threshold can be formed".into(),
        ));
    }
    let th = BetaThreshold {
        delta,
        d,
        c,
        t0,
        bound_b,
        bound_l,
    };
    grid.iter()
        .map(|&t| {
            let beta = th.at(t, gram(t).log_det(), lambda_schedule(t))?;
            Ok(json!({ "t": t, "beta": beta }))
        })
        .collect()
}

fn run(a: RunArgs) -> prefbai::Result<()> {
    let mut config = a.experiment.build()?;
    config.method = a.method;
    config.seed = a.seed;
    let instance = a.instance.as_ref().map(Instance::read).transpose()?;
    let setting = match (&instance, a.k) {
        (Some(inst), _) => Setting::from_instance(inst, config.bound_b),
        (None, Some(k)) => Setting::Unstructured { k },
        (None, None) => {
            return Err(prefbai::Error::InvalidArgument("give --instance or --k".into()));
        }
    };
    let mut trace_file = a
        .trace
        .as_ref()
        .map(|p| File::create(p).map(BufWriter::new).map_err(|e| prefbai::Error::InvalidArgument(format!("{}: {e}", p.display()))))
        .transpose()?;
    let trace = trace_file.as_mut().map(|w| w as &mut dyn Write);
    let outcome = match (&a.judge_cmd, &instance) {
        (Some(cmd), _) => {
            let mut judge = ExternalJudge::spawn_shell(cmd, Duration::from_secs(a.judge_timeout))?;
            let truth = instance.as_ref().map(Instance::best_policy);
            run_experiment(&setting, &mut judge, &config, truth, trace)
        }
        (None, Some(inst)) => run_simulated(inst, &config, trace),
        (None, None) => {
            return Err(prefbai::Error::InvalidArgument(
                "a simulated run needs --instance; use --judge-cmd for an external judge".into(),
            ))
        }
    };
    if let Some(w) = trace_file.as_mut() {
        w.flush().map_err(|e| prefbai::Error::InvalidArgument(format!("trace: {e}")))?;
    }
    let outcome = outcome?;
    println!("{}", serde_json::to_string_pretty(&outcome).expect("outcome serializes"));
    Ok(())
}

fn run_bench(a: BenchArgs) -> prefbai::Result<()> {
    let instance = Instance::read(&a.instance)?;
    let config = BenchConfig {
        methods: if a.methods.is_empty() { Method::ALL.to_vec() } else { a.methods.clone() },
        reps: a.reps,
        grid_step: a.grid_step,
        base_seed: a.base_seed,
        workers: a.workers,
        ci: if a.wilson { CiMethod::Wilson } else { CiMethod::Normal },
        ci_level: a.ci_level,
        max_failure_rate: a.max_failure_rate,
        experiment: a.experiment.build()?,
    };
    let result = bench(&instance, &config)?;
    for path in export(&result, &a.out)? {
        eprintln!("wrote {}", path.display());
    }
    println!(
        "{:<12} {:>9} {:>21} {:>8} {:>7} {:>10} {:>8}",
        "method", "mean_tau", "ci", "stopped", "capped", "error_rate", "tau/LB"
    );
    for (m, lb) in result.methods.iter().zip(&result.lower_bound) {
        let s = &m.stopping;
        println!(
            "{:<12} {:>9.1} {:>10.1}..{:<9.1} {:>8} {:>7} {:>10.4} {:>8.3}",
            m.method.to_string(),
            s.mean_tau,
            s.ci_lo,
            s.ci_hi,
            s.stopped,
            s.capped,
            s.error_rate,
            lb.ratio
        );
    }
    Ok(())
}
