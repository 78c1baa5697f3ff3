//! The adaptive experiment: initial exploration, allocation tracking with
//! forced exploration, GLR stopping and the plug-in decision. The benchmark
//! samplers run through the same engine with a different pair-selection
//! rule.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::baselines::{
    double_ts_next, eps_greedy_next, greedy_pair, random_pair_next, round_robin_next, rucb_next, RoundRobin,
};
use crate::design::{gamma_schedule, structured_glr, BetaThreshold, DesignObjective, SolverOptions};
use crate::divergence::bern_kl;
use crate::error::{Error, Result};
use crate::estimation::{lambda_schedule, BtEstimator};
use crate::instances::{argmax, max_pair_distance, pair_count, Instance, PairIndex, StructuredModel};
use crate::judge::{Judge, SimulatedJudge};
use crate::ledger::TrialLedger;
use crate::linalg::{dot, norm, SymMatrix};
use crate::rng::{derive_seed, RngState};
use crate::unstructured::{allocation_from, best_from_upper, glr_from, heuristic_threshold, rho_threshold, PairTable};
use crate::unstructured::ThresholdMode;

const JUDGE_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LlmPo,
    RoundRobin,
    Random,
    EpsGreedy,
    DoubleTs,
    Rucb,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::LlmPo,
        Method::RoundRobin,
        Method::Random,
        Method::EpsGreedy,
        Method::DoubleTs,
        Method::Rucb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LlmPo => "llm-po",
            Method::RoundRobin => "round-robin",
            Method::Random => "random",
            Method::EpsGreedy => "eps-greedy",
            Method::DoubleTs => "double-ts",
            Method::Rucb => "rucb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// What the engine knows about the policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    Unstructured { k: usize },
    Structured {
        features: Vec<Vec<f64>>,
        bound_b: f64,
        bound_l: f64,
    },
}

impl Setting {
    /// Structured setting with `B` defaulting to `5 ||theta||` (10 when
    /// `theta = 0`).
    pub fn structured(model: &StructuredModel, bound_b: Option<f64>) -> Self {
        let n = norm(model.theta());
        Setting::Structured {
            features: model.features().to_vec(),
            bound_b: bound_b.unwrap_or(if n > 0.0 { 5.0 * n } else { 10.0 }),
            bound_l: model.bound_l(),
        }
    }

    /// Structured setting without a known parameter (`B = 10` by default).
    pub fn from_features(features: Vec<Vec<f64>>, bound_b: Option<f64>) -> Self {
        let bound_l = max_pair_distance(&features);
        Setting::Structured {
            features,
            bound_b: bound_b.unwrap_or(10.0),
            bound_l,
        }
    }

    pub fn from_instance(instance: &Instance, bound_b: Option<f64>) -> Self {
        match instance {
            Instance::Unstructured(mu) => Setting::Unstructured { k: mu.k() },
            Instance::Structured(m) => Setting::structured(m, bound_b),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Setting::Unstructured { k } => *k,
            Setting::Structured { features, .. } => features.len(),
        }
    }
}

/// How the tracking step turns targets into sampling decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tracking {
    /// Deficit against the current target: `t omega_ij(t) - N_ij`.
    Direct,
    /// Deficit against the running sum of past targets:
    /// `sum_{s <= t} omega_ij(s) - N_ij`.
    #[default]
    Cumulative,
}

impl FromStr for Tracking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "cumulative" => Ok(Self::Cumulative),
            other => Err(Error::InvalidArgument(format!(
                "unknown tracking rule {other:?} (expected direct|cumulative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub delta: f64,
    /// Initial pulls per exploration pair.
    pub n0: u64,
    /// Forced-exploration constant: pairs of `A0` with `N < c' sqrt(t)` are
    /// sampled first.
    pub c_prime: f64,
    pub budget_cap: u64,
    pub threshold_mode: ThresholdMode,
    pub tracking: Tracking,
    /// Constant `C` of the theoretical unstructured threshold.
    pub threshold_c: f64,
    pub seed: u64,
    /// Structured allocation re-solve period.
    pub design_every: u64,
    pub check_every: u64,
    /// Structured estimator refit period.
    pub refit_every: u64,
    pub epsilon: f64,
    pub rucb_alpha: f64,
    /// Norm bound of the projected estimator; `None` picks the setting's.
    pub bound_b: Option<f64>,
    /// Multiplier on `gamma_t = t^{-1/8}`.
    pub gamma_scale: f64,
    /// Express `gamma_t` in units of the smallest gap ratio at the uniform
    /// allocation, making the design regulariser invariant to the scale of
    /// the features.
    pub gamma_relative: bool,
    /// Add the pairs joining the initial empirical best to the structured
    /// exploration set.
    pub a0_join_best: bool,
    /// Budgets at which the current recommendation is recorded.
    pub checkpoints: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::LlmPo,
            delta: 0.05,
            n0: 1,
            c_prime: 0.1,
            budget_cap: 30_000,
            threshold_mode: ThresholdMode::Heuristic,
            tracking: Tracking::Cumulative,
            threshold_c: 1.0,
            seed: 0,
            design_every: 10,
            check_every: 1,
            refit_every: 1,
            epsilon: 0.1,
            rucb_alpha: 0.51,
            bound_b: None,
            gamma_scale: 1.0,
            gamma_relative: true,
            a0_join_best: true,
            checkpoints: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument(format!("delta = {} must be in (0, 1/2)", self.delta)));
        }
        if self.n0 == 0 {
            return Err(Error::InvalidArgument("n0 must be at least 1".into()));
        }
        if self.design_every == 0 || self.check_every == 0 || self.refit_every == 0 {
            return Err(Error::InvalidArgument("cadences must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon = {} must be in [0, 1]", self.epsilon)));
        }
        if !(self.rucb_alpha > 0.5) {
            return Err(Error::InvalidArgument(format!("alpha = {} must exceed 1/2", self.rucb_alpha)));
        }
        if !(self.c_prime >= 0.0) || !(self.gamma_scale >= 0.0) {
            return Err(Error::InvalidArgument("c' and gamma scale must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub method: Method,
    /// Step at termination: the stopping time, or the budget cap.
    pub tau: u64,
    /// False when the budget ran out before the stopping rule fired.
    pub stopped: bool,
    pub recommended: usize,
    pub correct: Option<bool>,
    pub wall_steps: u64,
    /// Stopping statistic and threshold at the last check.
    pub statistic: f64,
    pub threshold: f64,
    /// Recommendation after `min(b, tau)` comparisons for every configured
    /// checkpoint `b`.
    pub checkpoints: Vec<usize>,
}

impl ExperimentOutcome {
    pub fn budget_exhausted(&self) -> bool {
        !self.stopped
    }
}

#[derive(Serialize)]
struct TraceLine {
    t: u64,
    pair: [usize; 2],
    outcome: u8,
    #[serde(rename = "Z")]
    z: Option<f64>,
    threshold: Option<f64>,
    target_nonzeros: usize,
}

#[derive(Serialize)]
struct TraceFinal<'a> {
    outcome: &'a ExperimentOutcome,
}

/// `U_t = {(i, j) in A0 : N_ij < c' sqrt(t)}`, as pair ids.
pub fn exploration_set(t: u64, counts: &[u64], a0: &[usize], c_prime: f64) -> Vec<usize> {
    let floor = c_prime * (t as f64).sqrt();
    let mut out: Vec<usize> = a0.iter().copied().filter(|&id| (counts[id] as f64) < floor).collect();
    out.sort_unstable();
    out
}

/// Least-sampled pair of `U_t`, ties to the lowest pair id.
pub fn forced_pair(t: u64, counts: &[u64], a0: &[usize], c_prime: f64) -> Option<usize> {
    let floor = c_prime * (t as f64).sqrt();
    let mut forced: Option<usize> = None;
    for &id in a0 {
        if (counts[id] as f64) < floor {
            forced = match forced {
                Some(f) if counts[f] < counts[id] || (counts[f] == counts[id] && f < id) => Some(f),
                _ => Some(id),
            };
        }
    }
    forced
}

/// Pair with the largest deficit `expected_ij - N_ij`, ties to the lowest
/// pair id.
pub fn largest_deficit(expected: &[f64], counts: &[u64]) -> usize {
    let mut best = 0;
    let mut best_deficit = f64::NEG_INFINITY;
    for (id, (&e, &n)) in expected.iter().zip(counts).enumerate() {
        let deficit = e - n as f64;
        if deficit > best_deficit {
            best_deficit = deficit;
            best = id;
        }
    }
    best
}

/// Least-sampled pair of `U_t` when it is nonempty, otherwise the pair with
/// the largest deficit `t omega_ij - N_ij`. Ties go to the lowest pair id.
pub fn next_pair(t: u64, counts: &[u64], a0: &[usize], c_prime: f64, target: &[f64]) -> usize {
    if let Some(id) = forced_pair(t, counts, a0, c_prime) {
        return id;
    }
    let tf = t as f64;
    let expected: Vec<f64> = target.iter().map(|w| tf * w).collect();
    largest_deficit(&expected, counts)
}

/// Pure tracking of a frozen target for `steps` steps from empty counts,
/// with optional forced exploration over `a0`.
pub fn track(target: &Allocation, steps: u64, a0: &[usize], c_prime: f64) -> Vec<u64> {
    let mut counts = vec![0u64; target.weights().len()];
    for t in 0..steps {
        let id = next_pair(t, &counts, a0, c_prime, target.weights());
        counts[id] += 1;
    }
    counts
}

/// Greedy volume-maximising choice of `d` pairs whose feature differences
/// span the feature space (when the features do).
pub fn spanning_pairs(features: &[Vec<f64>]) -> Vec<usize> {
    let k = features.len();
    let d = features.first().map_or(0, Vec::len);
    let diffs: Vec<Vec<f64>> = crate::instances::all_pairs(k)
        .into_iter()
        .map(|p| features[p.i].iter().zip(&features[p.j]).map(|(a, b)| a - b).collect())
        .collect();
    let ridge = 1e-9 * diffs.iter().map(|z| dot(z, z)).fold(0.0, f64::max).max(1e-300);
    let mut m = SymMatrix::zeros(d);
    m.add_diagonal(ridge);
    let mut chosen = Vec::with_capacity(d);
    for _ in 0..d.min(diffs.len()) {
        let chol = m.cholesky().expect("ridge keeps the matrix positive definite");
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for (id, z) in diffs.iter().enumerate() {
            if chosen.contains(&id) {
                continue;
            }
            let gain = chol.inv_quad_form(z);
            if gain > best_gain {
                best_gain = gain;
                best = id;
            }
        }
        chosen.push(best);
        m.add_outer(1.0, &diffs[best]);
    }
    chosen.sort_unstable();
    chosen
}

enum Selector {
    LlmPo,
    RoundRobin(RoundRobin),
    Random,
    EpsGreedy,
    DoubleTs,
    Rucb,
}

struct Structured {
    features: Vec<Vec<f64>>,
    bound_b: f64,
    bound_l: f64,
    estimator: BtEstimator,
    fitted_at: Option<u64>,
    gate_c: f64,
    t0: u64,
    gamma_unit: f64,
}

struct Engine<'a> {
    cfg: &'a ExperimentConfig,
    k: usize,
    ledger: TrialLedger,
    table: PairTable,
    upper: Vec<f64>,
    info: Vec<f64>,
    a0: Vec<usize>,
    target: Vec<f64>,
    target_nonzeros: usize,
    /// Running sum of the targets used by the tracking steps.
    cumulative: Vec<f64>,
    structured: Option<Structured>,
    selector: Selector,
    rng: RngState,
    checkpoints: Vec<usize>,
    next_checkpoint: usize,
    last_z: f64,
    last_threshold: f64,
    /// The latest comparison has not been written to the trace yet.
    pending: bool,
}

impl<'a> Engine<'a> {
    fn new(setting: &Setting, cfg: &'a ExperimentConfig) -> Result<Self> {
        let k = setting.k();
        if k < 2 {
            return Err(Error::InvalidArgument("need at least two policies".into()));
        }
        let n = pair_count(k);
        let (ledger, structured, a0) = match setting {
            Setting::Unstructured { .. } => (TrialLedger::new(k), None, (0..n).collect()),
            Setting::Structured {
                features,
                bound_b,
                bound_l,
            } => {
                let d = features.first().map_or(0, Vec::len);
                if d == 0 || features.iter().any(|x| x.len() != d) {
                    return Err(Error::InvalidArgument("features must be nonempty rows of equal length".into()));
                }
                let bound_b = cfg.bound_b.unwrap_or(*bound_b);
                let s = Structured {
                    features: features.clone(),
                    bound_b,
                    bound_l: *bound_l,
                    estimator: BtEstimator::new(d, bound_b),
                    fitted_at: None,
                    gate_c: 0.0,
                    t0: 1,
                    gamma_unit: 1.0,
                };
                (TrialLedger::with_features(features), Some(s), spanning_pairs(features))
            }
        };
        let selector = match cfg.method {
            Method::LlmPo => Selector::LlmPo,
            Method::RoundRobin => Selector::RoundRobin(RoundRobin::new()),
            Method::Random => Selector::Random,
            Method::EpsGreedy => Selector::EpsGreedy,
            Method::DoubleTs => Selector::DoubleTs,
            Method::Rucb => Selector::Rucb,
        };
        Ok(Self {
            cfg,
            k,
            ledger,
            table: PairTable::new(k),
            upper: vec![0.5; n],
            info: vec![0.0; n],
            a0,
            target: vec![1.0 / n as f64; n],
            target_nonzeros: n,
            cumulative: vec![0.0; n],
            structured,
            selector,
            rng: RngState::from_seed(derive_seed(cfg.seed, POLICY_STREAM)),
            checkpoints: Vec::with_capacity(cfg.checkpoints.len()),
            next_checkpoint: 0,
            last_z: 0.0,
            last_threshold: f64::INFINITY,
            pending: false,
        })
    }

    fn t(&self) -> u64 {
        self.ledger.total()
    }

    fn pull(&mut self, judge: &mut dyn Judge, id: usize, trace: &mut Option<&mut dyn Write>) -> Result<()> {
        let pair = self.ledger.pairs()[id];
        self.flush(trace, None)?;
        let outcome = judge.compare(pair).map_err(|source| Error::RunAborted {
            t: self.t(),
            records: self.ledger.records().to_vec(),
            source,
        })?;
        self.ledger.record(pair, outcome);
        self.pending = true;
        let m = self.ledger.mean_by_id(id);
        self.upper[id] = m;
        self.info[id] = bern_kl(m, 0.5);
        Ok(())
    }

    /// Writes the trace line of the latest comparison if it is still
    /// pending, with the stopping check when one was evaluated.
    fn flush(&mut self, trace: &mut Option<&mut dyn Write>, check: Option<(f64, f64)>) -> Result<()> {
        if !self.pending {
            return Ok(());
        }
        self.pending = false;
        if let Some(w) = trace.as_deref_mut() {
            let last = self.ledger.records().last().expect("a comparison is pending");
            let line = TraceLine {
                t: last.step,
                pair: [last.pair.i, last.pair.j],
                outcome: last.outcome as u8,
                z: check.map(|c| c.0),
                threshold: check.map(|c| c.1),
                target_nonzeros: self.target_nonzeros,
            };
            write_line(w, &line)?;
        }
        Ok(())
    }

    /// Refits the structured estimator unless it is current. Without
    /// `force`, refits only every `refit_every` steps.
    fn refit(&mut self, force: bool) -> Result<()> {
        let t = self.t();
        let every = self.cfg.refit_every;
        if let Some(s) = &mut self.structured {
            let stale = match s.fitted_at {
                None => true,
                Some(at) => at != t && (force || t % every == 0),
            };
            if stale {
                s.estimator.refit(&self.ledger, lambda_schedule(t))?;
                s.fitted_at = Some(t);
            }
        }
        Ok(())
    }

    fn scores(&self) -> Option<Vec<f64>> {
        self.structured
            .as_ref()
            .map(|s| s.features.iter().map(|x| dot(s.estimator.theta(), x)).collect())
    }

    /// Plug-in decision from the current estimate.
    fn recommendation(&mut self) -> Result<usize> {
        if self.structured.is_some() {
            self.refit(true)?;
            Ok(argmax(&self.scores().expect("structured")))
        } else {
            Ok(best_from_upper(&self.table, &self.upper))
        }
    }

    fn record_checkpoints(&mut self) -> Result<()> {
        let t = self.t();
        while self.next_checkpoint < self.cfg.checkpoints.len() && self.cfg.checkpoints[self.next_checkpoint] <= t {
            let r = self.recommendation()?;
            self.checkpoints.push(r);
            self.next_checkpoint += 1;
        }
        Ok(())
    }

    fn initialise(&mut self, judge: &mut dyn Judge, trace: &mut Option<&mut dyn Write>) -> Result<()> {
        let first: Vec<usize> = self.a0.clone();
        for &id in &first {
            for _ in 0..self.cfg.n0 {
                if self.t() >= self.cfg.budget_cap {
                    return Ok(());
                }
                self.pull(judge, id, trace)?;
                self.record_checkpoints()?;
            }
        }
        if self.structured.is_some() && self.cfg.a0_join_best {
            let best = self.recommendation()?;
            let extra: Vec<usize> = (0..self.k)
                .filter(|&j| j != best)
                .map(|j| self.table.id(best, j))
                .filter(|id| !self.a0.contains(id))
                .collect();
            for &id in &extra {
                for _ in 0..self.cfg.n0 {
                    if self.t() >= self.cfg.budget_cap {
                        break;
                    }
                    self.pull(judge, id, trace)?;
                    self.record_checkpoints()?;
                }
            }
            self.a0.extend(extra);
            self.a0.sort_unstable();
        }
        // Initial samples count as already on target.
        self.cumulative = self.ledger.counts().iter().map(|&n| n as f64).collect();
        let t_init = self.t().max(1);
        let gamma_unit = if self.cfg.gamma_relative { self.uniform_gap_ratio()? } else { 1.0 };
        if let Some(s) = &mut self.structured {
            let gram = self.ledger.gram().expect("structured ledger");
            s.gate_c = 0.5 * gram.min_eigenvalue().max(0.0) / (t_init as f64).sqrt();
            s.t0 = t_init;
            s.gamma_unit = gamma_unit;
        }
        Ok(())
    }

    /// Smallest gap ratio of the current estimate at the uniform allocation.
    fn uniform_gap_ratio(&mut self) -> Result<f64> {
        if self.structured.is_none() {
            return Ok(1.0);
        }
        self.refit(false)?;
        let s = self.structured.as_ref().expect("structured");
        match DesignObjective::new(s.estimator.theta(), &s.features) {
            Ok(obj) => {
                let v = obj.min_psi(Allocation::uniform(self.k).weights())?;
                Ok(if v > 0.0 && v.is_finite() { v } else { 1.0 })
            }
            Err(Error::NonUniqueScoreArgmax { .. }) => Ok(1.0),
            Err(e) => Err(e),
        }
    }

    fn update_target(&mut self) -> Result<()> {
        let t = self.t();
        if self.structured.is_none() {
            let best = best_from_upper(&self.table, &self.upper);
            let a = allocation_from(&self.table, &self.upper, &self.info, best);
            self.target_nonzeros = a.nonzeros();
            self.target = a.weights().to_vec();
            return Ok(());
        }
        let since = t.saturating_sub(self.structured.as_ref().expect("structured").t0);
        if since % self.cfg.design_every != 0 {
            return Ok(());
        }
        self.refit(false)?;
        let s = self.structured.as_ref().expect("structured");
        let gamma = self.cfg.gamma_scale * s.gamma_unit * gamma_schedule(t);
        match DesignObjective::new(s.estimator.theta(), &s.features) {
            Ok(obj) => {
                let (a, _) = obj.maximize(gamma, &self.target, &SolverOptions::tracking())?;
                self.target_nonzeros = a.nonzeros();
                self.target = a.weights().to_vec();
            }
            Err(Error::NonUniqueScoreArgmax { .. }) => {
                let n = self.target.len();
                self.target = vec![1.0 / n as f64; n];
                self.target_nonzeros = n;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn select(&mut self) -> Result<usize> {
        let t = self.t();
        let k = self.k;
        let pair: PairIndex = match &mut self.selector {
            Selector::LlmPo => {
                self.update_target()?;
                let counts = self.ledger.counts();
                if let Some(id) = forced_pair(t, counts, &self.a0, self.cfg.c_prime) {
                    return Ok(id);
                }
                return Ok(match self.cfg.tracking {
                    Tracking::Direct => next_pair(t, counts, &[], 0.0, &self.target),
                    Tracking::Cumulative => {
                        for (c, w) in self.cumulative.iter_mut().zip(&self.target) {
                            *c += w;
                        }
                        largest_deficit(&self.cumulative, counts)
                    }
                });
            }
            Selector::RoundRobin(state) => round_robin_next(state, k),
            Selector::Random => random_pair_next(k, &mut self.rng),
            Selector::EpsGreedy if self.structured.is_none() => {
                eps_greedy_next(k, &mut self.rng, self.cfg.epsilon, || greedy_pair(&self.table, &self.upper))
            }
            Selector::EpsGreedy => {
                if self.rng.uniform() < self.cfg.epsilon {
                    random_pair_next(k, &mut self.rng)
                } else {
                    self.refit(false)?;
                    let scores = self.scores().expect("structured");
                    let best = argmax(&scores);
                    let mut opp = usize::MAX;
                    let mut top = f64::NEG_INFINITY;
                    for (j, &s) in scores.iter().enumerate() {
                        if j != best && s > top {
                            top = s;
                            opp = j;
                        }
                    }
                    PairIndex::new(best, opp)
                }
            }
            Selector::DoubleTs => double_ts_next(&self.ledger, &self.table, &mut self.rng),
            Selector::Rucb => rucb_next(&self.ledger, &self.table, &mut self.rng, self.cfg.rucb_alpha),
        };
        Ok(pair.id(k))
    }

    /// Evaluates the stopping rule at the current `t`.
    fn should_stop(&mut self) -> Result<bool> {
        let t = self.t();
        let delta = self.cfg.delta;
        if self.structured.is_none() {
            let best = best_from_upper(&self.table, &self.upper);
            let z = glr_from(&self.table, &self.upper, &self.info, self.ledger.counts(), best);
            let rho = rho_threshold(
                delta,
                t.max(1),
                self.cfg.threshold_mode,
                self.cfg.threshold_c,
                self.upper.len(),
            )?;
            self.last_z = z;
            self.last_threshold = rho;
            return Ok(z > rho);
        }
        self.refit(false)?;
        let lambda = lambda_schedule(t);
        let s = self.structured.as_ref().expect("structured");
        let z = structured_glr(&self.ledger, s.estimator.theta(), &s.features, lambda)?;
        let gram = self.ledger.gram().expect("structured ledger");
        let threshold = match self.cfg.threshold_mode {
            ThresholdMode::Heuristic => heuristic_threshold(delta, t),
            ThresholdMode::Theoretical => BetaThreshold {
                delta,
                d: gram.dim(),
                c: s.gate_c.max(f64::MIN_POSITIVE),
                t0: s.t0,
                bound_b: s.bound_b,
                bound_l: s.bound_l,
            }
            .at(t.max(s.t0), gram.log_det(), lambda)?,
        };
        self.last_z = z;
        self.last_threshold = threshold;
        if z <= threshold {
            return Ok(false);
        }
        Ok(gram.min_eigenvalue() >= s.gate_c * (t as f64).sqrt())
    }

    fn run(
        mut self,
        judge: &mut dyn Judge,
        truth: Option<usize>,
        mut trace: Option<&mut dyn Write>,
    ) -> Result<(ExperimentOutcome, TrialLedger)> {
        self.initialise(judge, &mut trace)?;
        let t_init = self.t();
        let mut stopped = false;
        if t_init > 0 {
            stopped = self.check(t_init, &mut trace)?;
        }
        while !stopped && self.t() < self.cfg.budget_cap {
            let id = self.select()?;
            self.pull(judge, id, &mut trace)?;
            self.record_checkpoints()?;
            stopped = self.check(t_init, &mut trace)?;
        }
        self.flush(&mut trace, None)?;
        let recommended = self.recommendation()?;
        while self.checkpoints.len() < self.cfg.checkpoints.len() {
            self.checkpoints.push(recommended);
        }
        let outcome = ExperimentOutcome {
            method: self.cfg.method,
            tau: self.t(),
            stopped,
            recommended,
            correct: truth.map(|b| b == recommended),
            wall_steps: self.t(),
            statistic: self.last_z,
            threshold: self.last_threshold,
            checkpoints: self.checkpoints,
        };
        if let Some(w) = trace.as_deref_mut() {
            write_line(w, &TraceFinal { outcome: &outcome })?;
        }
        Ok((outcome, self.ledger))
    }

    fn check(&mut self, t_init: u64, trace: &mut Option<&mut dyn Write>) -> Result<bool> {
        let t = self.t();
        if t < t_init || (t - t_init) % self.cfg.check_every != 0 || t == 0 {
            return Ok(false);
        }
        let stop = self.should_stop()?;
        self.flush(trace, Some((self.last_z, self.last_threshold)))?;
        Ok(stop)
    }
}

fn write_line<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    let mut text = serde_json::to_string(value).map_err(|e| Error::json("<trace>", e))?;
    text.push('\n');
    w.write_all(text.as_bytes()).map_err(|e| Error::io("<trace>", e))
}

/// Runs one experiment against `judge`.
///
/// `truth`, when known, fills `ExperimentOutcome::correct`. Trace lines are
/// written as the run proceeds, so a failed run leaves its partial trace in
/// `trace`.
pub fn run_experiment(
    setting: &Setting,
    judge: &mut dyn Judge,
    config: &ExperimentConfig,
    truth: Option<usize>,
    trace: Option<&mut dyn Write>,
) -> Result<ExperimentOutcome> {
    Ok(run_detailed(setting, judge, config, truth, trace)?.0)
}

/// [`run_experiment`] that also returns the final ledger.
pub fn run_detailed(
    setting: &Setting,
    judge: &mut dyn Judge,
    config: &ExperimentConfig,
    truth: Option<usize>,
    trace: Option<&mut dyn Write>,
) -> Result<(ExperimentOutcome, TrialLedger)> {
    config.validate()?;
    Engine::new(setting, config)?.run(judge, truth, trace)
}

/// Runs LLM-PO regardless of `config.method`.
pub fn run_llmpo(
    setting: &Setting,
    judge: &mut dyn Judge,
    config: &ExperimentConfig,
    truth: Option<usize>,
    trace: Option<&mut dyn Write>,
) -> Result<ExperimentOutcome> {
    let config = ExperimentConfig {
        method: Method::LlmPo,
        ..config.clone()
    };
    run_experiment(setting, judge, &config, truth, trace)
}

/// Runs one experiment against a simulated judge for `instance`, with the
/// judge's randomness derived from `config.seed`.
pub fn run_simulated(
    instance: &Instance,
    config: &ExperimentConfig,
    trace: Option<&mut dyn Write>,
) -> Result<ExperimentOutcome> {
    let setting = Setting::from_instance(instance, config.bound_b);
    let mut judge = SimulatedJudge::new(
        &instance.preferences(),
        RngState::from_seed(derive_seed(config.seed, JUDGE_STREAM)),
    );
    run_experiment(&setting, &mut judge, config, Some(instance.best_policy()), trace)
}
