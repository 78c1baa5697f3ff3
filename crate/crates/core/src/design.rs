//! Fisher-information design for Bradley-Terry models: the gap ratios
//! `psi_i`, the regularised max-min allocation program, the structured GLR
//! statistic and the `beta(delta, t)` threshold.
//!
//! The allocation program maximises `min_i psi_i(omega) - (gamma/2)||omega||^2`
//! over the simplex. The min is replaced by a soft-min whose temperature is
//! tightened in stages, and each stage is solved by accelerated projected
//! gradient ascent with backtracking. The gradient of every `psi_i` is
//! assembled through one `d x d` matrix, so a full gradient costs
//! `O(K d^2 + |S| d^2)`.

use serde::{Deserialize, Serialize};

use crate::allocation::{check_simplex, project_simplex, Allocation};
use crate::divergence::logistic_deriv;
use crate::error::{Error, Result};
use crate::estimation::g_and_h;
use crate::instances::{all_pairs, argmax, pair_count};
use crate::ledger::TrialLedger;
use crate::linalg::{dot, SymMatrix};

/// Ridge added to `H(theta, omega)` so it stays invertible on the whole
/// simplex.
pub const FISHER_RIDGE: f64 = 1e-10;

/// Design regularisation schedule `gamma_t = t^{-1/8}`.
pub fn gamma_schedule(t: u64) -> f64 {
    (t.max(1) as f64).powf(-0.125)
}

/// Index of the unique score maximiser, or an error naming the tie.
pub fn unique_best(theta: &[f64], features: &[Vec<f64>]) -> Result<usize> {
    let scores: Vec<f64> = features.iter().map(|x| dot(theta, x)).collect();
    let best = argmax(&scores);
    if let Some(other) = (0..scores.len()).find(|&i| i != best && scores[i] == scores[best]) {
        return Err(Error::NonUniqueScoreArgmax {
            first: best.min(other),
            second: best.max(other),
        });
    }
    Ok(best)
}

/// Knobs for the allocation solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Soft-min sharpness relative to the current smallest `psi`, one entry
    /// per continuation stage.
    pub sharpness: Vec<f64>,
    /// Iteration cap per stage.
    pub max_iter: usize,
    /// Stage ends once a step moves no weight by more than this.
    pub step_tol: f64,
    /// Compare the result with the uniform allocation and every vertex.
    pub guard: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sharpness: vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            max_iter: 5000,
            step_tol: 1e-12,
            guard: true,
        }
    }
}

impl SolverOptions {
    /// Cheap settings for re-solving inside an experiment loop from a warm
    /// start.
    pub fn tracking() -> Self {
        Self {
            sharpness: vec![1e3],
            max_iter: 60,
            step_tol: 1e-9,
            guard: false,
        }
    }
}

/// The design program at a fixed `theta`.
#[derive(Debug, Clone)]
pub struct DesignObjective {
    k: usize,
    d: usize,
    best: usize,
    /// Suboptimal policies, ascending.
    others: Vec<usize>,
    /// `theta^T (x_i - x_best)` per entry of `others`.
    gaps: Vec<f64>,
    /// `x_i - x_best` per entry of `others`.
    dirs: Vec<Vec<f64>>,
    /// `x_a - x_b` per canonical pair.
    pair_z: Vec<Vec<f64>>,
    /// `sigma'(theta^T z_ab)` per canonical pair.
    pair_s: Vec<f64>,
}

/// Per-evaluation quantities shared by value and gradient.
struct Evaluation {
    psi: Vec<f64>,
    /// `H^{-1} z_i` per suboptimal policy.
    u: Vec<Vec<f64>>,
    /// `z_i^T H^{-1} z_i`.
    q: Vec<f64>,
}

impl DesignObjective {
    pub fn new(theta: &[f64], features: &[Vec<f64>]) -> Result<Self> {
        let k = features.len();
        if k < 2 {
            return Err(Error::InvalidArgument("need at least two policies".into()));
        }
        let d = theta.len();
        if features.iter().any(|x| x.len() != d) {
            return Err(Error::InvalidArgument("feature rows must match theta's dimension".into()));
        }
        let best = unique_best(theta, features)?;
        let others: Vec<usize> = (0..k).filter(|&i| i != best).collect();
        let dirs: Vec<Vec<f64>> = others
            .iter()
            .map(|&i| features[i].iter().zip(&features[best]).map(|(a, b)| a - b).collect())
            .collect();
        let gaps = dirs.iter().map(|z| dot(theta, z)).collect();
        let pair_z: Vec<Vec<f64>> = all_pairs(k)
            .into_iter()
            .map(|p| features[p.i].iter().zip(&features[p.j]).map(|(a, b)| a - b).collect())
            .collect();
        let pair_s = pair_z.iter().map(|z| logistic_deriv(dot(theta, z))).collect();
        Ok(Self {
            k,
            d,
            best,
            others,
            gaps,
            dirs,
            pair_z,
            pair_s,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn best(&self) -> usize {
        self.best
    }

    /// Suboptimal policies in the order used by [`DesignObjective::psi`].
    pub fn others(&self) -> &[usize] {
        &self.others
    }

    /// `H(theta, omega) = sum omega_ab sigma'_ab z_ab z_ab^T + ridge I`.
    pub fn fisher(&self, weights: &[f64]) -> SymMatrix {
        let mut h = SymMatrix::zeros(self.d);
        for ((w, s), z) in weights.iter().zip(&self.pair_s).zip(&self.pair_z) {
            if *w > 0.0 {
                h.add_outer(w * s, z);
            }
        }
        h.add_diagonal(FISHER_RIDGE);
        h
    }

    fn evaluate(&self, weights: &[f64]) -> Result<Evaluation> {
        let h = self.fisher(weights);
        let chol = h.cholesky().ok_or_else(|| Error::SingularInformation {
            direction: self.dirs.first().cloned().unwrap_or_default(),
        })?;
        let mut psi = Vec::with_capacity(self.dirs.len());
        let mut u = Vec::with_capacity(self.dirs.len());
        let mut q = Vec::with_capacity(self.dirs.len());
        for (z, g) in self.dirs.iter().zip(&self.gaps) {
            let ui = chol.solve(z);
            let qi = dot(z, &ui);
            psi.push(if *g == 0.0 { 0.0 } else { g * g / (2.0 * qi) });
            u.push(ui);
            q.push(qi);
        }
        Ok(Evaluation { psi, u, q })
    }

    /// `psi_i(omega)` for every suboptimal policy, in `others()` order.
    pub fn psi(&self, weights: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(weights)?.psi)
    }

    pub fn min_psi(&self, weights: &[f64]) -> Result<f64> {
        let psi = self.psi(weights)?;
        let m = psi.iter().copied().fold(f64::INFINITY, f64::min);
        if m.is_nan() {
            return Err(Error::NanObjective {
                iterate: weights.to_vec(),
            });
        }
        Ok(m)
    }

    /// `min_i psi_i - (gamma/2)||omega||^2`.
    pub fn value(&self, weights: &[f64], gamma: f64) -> Result<f64> {
        Ok(self.min_psi(weights)? - 0.5 * gamma * dot(weights, weights))
    }

    /// Gradient of `sum_i p_i psi_i` with respect to `omega`.
    fn weighted_gradient(&self, ev: &Evaluation, p: &[f64], out: &mut [f64]) {
        let mut m = SymMatrix::zeros(self.d);
        for (idx, &pi) in p.iter().enumerate() {
            let g = self.gaps[idx];
            if pi == 0.0 || g == 0.0 {
                continue;
            }
            let c = pi * g * g / (2.0 * ev.q[idx] * ev.q[idx]);
            m.add_outer(c, &ev.u[idx]);
        }
        for ((o, z), s) in out.iter_mut().zip(&self.pair_z).zip(&self.pair_s) {
            *o = s * dot(z, &m.mul_vec(z));
        }
    }

    /// Gradient of `psi_i` (entry `idx` of `others()`).
    pub fn psi_gradient(&self, weights: &[f64], idx: usize) -> Result<Vec<f64>> {
        let ev = self.evaluate(weights)?;
        let mut p = vec![0.0; self.others.len()];
        p[idx] = 1.0;
        let mut out = vec![0.0; self.pair_z.len()];
        self.weighted_gradient(&ev, &p, &mut out);
        Ok(out)
    }

    /// Soft-min surrogate `-(1/eta) ln sum exp(-eta psi_i) - (gamma/2)||omega||^2`
    /// and, optionally, its gradient.
    fn smoothed(&self, weights: &[f64], eta: f64, gamma: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let ev = self.evaluate(weights)?;
        let lo = ev.psi.iter().copied().fold(f64::INFINITY, f64::min);
        if lo.is_nan() {
            return Err(Error::NanObjective {
                iterate: weights.to_vec(),
            });
        }
        let mut p: Vec<f64> = ev.psi.iter().map(|v| (-eta * (v - lo)).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        let value = lo - total.ln() / eta - 0.5 * gamma * dot(weights, weights);
        if let Some(out) = grad {
            self.weighted_gradient(&ev, &p, out);
            for (o, w) in out.iter_mut().zip(weights) {
                *o -= gamma * w;
            }
        }
        Ok(value)
    }

    /// Accelerated projected gradient ascent on the soft-min surrogate.
    fn ascend(&self, start: Vec<f64>, eta: f64, gamma: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
        let n = start.len();
        let mut x = start;
        let mut fx = self.smoothed(&x, eta, gamma, None)?;
        let mut y = x.clone();
        let mut grad = vec![0.0; n];
        let mut momentum = 1.0_f64;
        let mut lip = f64::NAN;
        for _ in 0..opts.max_iter {
            let fy = self.smoothed(&y, eta, gamma, Some(&mut grad))?;
            if lip.is_nan() {
                lip = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-300) * 10.0;
            }
            let (cand, fc, step) = loop {
                let raw: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a + g / lip).collect();
                let cand = project_simplex(&raw);
                let diff: Vec<f64> = cand.iter().zip(&y).map(|(c, a)| c - a).collect();
                let fc = self.smoothed(&cand, eta, gamma, None)?;
                let model = fy + dot(&grad, &diff) - 0.5 * lip * dot(&diff, &diff);
                if fc >= model - 1e-14 * fy.abs() || lip > 1e300 {
                    let step = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    break (cand, fc, step);
                }
                lip *= 2.0;
            };
            if fc < fx {
                // Momentum overshot: restart from the last accepted point.
                y.clone_from(&x);
                momentum = 1.0;
                if step <= opts.step_tol {
                    break;
                }
                continue;
            }
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            y = cand.iter().zip(&x).map(|(c, a)| c + beta * (c - a)).collect();
            x = cand;
            fx = fc;
            momentum = next;
            lip *= 0.9;
            if step <= opts.step_tol {
                break;
            }
        }
        Ok(x)
    }

    /// Maximise `min_i psi_i - (gamma/2)||omega||^2` from `init`.
    ///
    /// Returns the allocation and its exact (unsmoothed) objective value.
    pub fn maximize(&self, gamma: f64, init: &[f64], opts: &SolverOptions) -> Result<(Allocation, f64)> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must be nonnegative")));
        }
        let n = pair_count(self.k);
        if init.len() != n {
            return Err(Error::InvalidArgument(format!("initial allocation needs {n} weights")));
        }
        if n == 1 {
            let w = vec![1.0];
            let v = self.value(&w, gamma)?;
            return Ok((Allocation::from_raw(self.k, w), v));
        }
        let mut x = project_simplex(init);
        for &sharp in &opts.sharpness {
            let psi = self.psi(&x)?;
            let lo = psi.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = psi.iter().copied().fold(0.0, f64::max);
            let scale = lo.max(1e-12 * hi).max(1e-300);
            x = self.ascend(x, sharp / scale, gamma, opts)?;
        }
        let mut best_value = self.value(&x, gamma)?;
        if opts.guard {
            let mut candidate = |w: Vec<f64>, current: &mut Vec<f64>| -> Result<()> {
                let v = self.value(&w, gamma)?;
                if v > best_value {
                    best_value = v;
                    *current = w;
                }
                Ok(())
            };
            candidate(vec![1.0 / n as f64; n], &mut x)?;
            for id in 0..n {
                let mut w = vec![0.0; n];
                w[id] = 1.0;
                candidate(w, &mut x)?;
            }
        }
        Ok((Allocation::from_raw(self.k, x), best_value))
    }
}

/// `H(theta, omega) = sum omega_ij sigma'(theta^T z_ij) z_ij z_ij^T + ridge I`.
pub fn fisher_matrix(theta: &[f64], omega: &[f64], features: &[Vec<f64>]) -> Result<SymMatrix> {
    check_simplex(omega)?;
    let k = features.len();
    if omega.len() != pair_count(k) {
        return Err(Error::InvalidArgument(format!("K = {k} needs {} weights", pair_count(k))));
    }
    let mut h = SymMatrix::zeros(theta.len());
    for (p, w) in all_pairs(k).into_iter().zip(omega) {
        let z: Vec<f64> = features[p.i].iter().zip(&features[p.j]).map(|(a, b)| a - b).collect();
        h.add_outer(w * logistic_deriv(dot(theta, &z)), &z);
    }
    h.add_diagonal(FISHER_RIDGE);
    Ok(h)
}

/// `psi_i = (theta^T z)^2 / (2 z^T H(theta, omega)^{-1} z)` with
/// `z = x_i - x_best`.
pub fn gap_ratio(theta: &[f64], omega: &[f64], features: &[Vec<f64>], i: usize) -> Result<f64> {
    let h = fisher_matrix(theta, omega, features)?;
    let best = unique_best(theta, features)?;
    if i == best || i >= features.len() {
        return Err(Error::InvalidArgument(format!("policy {i} is not a suboptimal policy")));
    }
    let z: Vec<f64> = features[i].iter().zip(&features[best]).map(|(a, b)| a - b).collect();
    let g = dot(theta, &z);
    if g == 0.0 {
        return Ok(0.0);
    }
    let chol = h.cholesky().ok_or_else(|| Error::SingularInformation { direction: z.clone() })?;
    Ok(g * g / (2.0 * chol.inv_quad_form(&z)))
}

/// Maximiser of `min_i psi_i(omega) - (gamma/2)||omega||^2`, started from
/// the uniform allocation.
pub fn solve_allocation(theta: &[f64], features: &[Vec<f64>], gamma: f64) -> Result<Allocation> {
    let k = features.len();
    solve_allocation_from(theta, features, gamma, &Allocation::uniform(k), &SolverOptions::default())
}

pub fn solve_allocation_from(
    theta: &[f64],
    features: &[Vec<f64>],
    gamma: f64,
    init: &Allocation,
    opts: &SolverOptions,
) -> Result<Allocation> {
    let obj = DesignObjective::new(theta, features)?;
    Ok(obj.maximize(gamma, init.weights(), opts)?.0)
}

/// Surrogate complexity `U = 1 / sup_omega min_i psi_i(omega)`.
pub fn surrogate_time(theta: &[f64], features: &[Vec<f64>]) -> Result<f64> {
    let obj = DesignObjective::new(theta, features)?;
    let k = features.len();
    let (_, value) = obj.maximize(0.0, Allocation::uniform(k).weights(), &SolverOptions::default())?;
    Ok(1.0 / value)
}

/// Structured GLR statistic
/// `min_{i != best} (theta^T z_i)^2 / (2 z_i^T H_t(theta)^{-1} z_i)`.
///
/// Uses counts rather than proportions, so it grows linearly in `t`.
pub fn structured_glr(ledger: &TrialLedger, theta_hat: &[f64], features: &[Vec<f64>], lambda: f64) -> Result<f64> {
    let scores: Vec<f64> = features.iter().map(|x| dot(theta_hat, x)).collect();
    let best = argmax(&scores);
    let (_, h) = g_and_h(theta_hat, ledger, lambda)?;
    let chol = h.cholesky().ok_or_else(|| Error::SingularInformation {
        direction: theta_hat.to_vec(),
    })?;
    let mut z_min = f64::INFINITY;
    let mut z = vec![0.0; theta_hat.len()];
    for i in (0..features.len()).filter(|&i| i != best) {
        for ((zi, a), b) in z.iter_mut().zip(&features[i]).zip(&features[best]) {
            *zi = a - b;
        }
        let g = scores[i] - scores[best];
        let v = if g == 0.0 { 0.0 } else { g * g / (2.0 * chol.inv_quad_form(&z)) };
        z_min = z_min.min(v);
    }
    Ok(if z_min.is_finite() { z_min } else { 0.0 })
}

/// Constants of the structured stopping threshold
/// `beta(delta, t) = (2 (1 + 2 L B) (sqrt(Psi_t / m0) + sqrt(lambda_t) B))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaThreshold {
    pub delta: f64,
    pub d: usize,
    /// Eigenvalue-gate constant: the gate is `Lambda_min(V_t) >= c sqrt(t)`.
    pub c: f64,
    /// Onset of the gate.
    pub t0: u64,
    pub bound_b: f64,
    pub bound_l: f64,
}

impl BetaThreshold {
    /// `m0 = min_{|u| <= B L} sigma'(u) = sigma'(B L)`.
    pub fn m0(&self) -> f64 {
        logistic_deriv(self.bound_b * self.bound_l)
    }

    /// Self-normalised confidence radius `Psi_t(delta)`.
    pub fn psi(&self, t: u64, logdet_v: f64) -> Result<f64> {
        if t < self.t0 {
            return Err(Error::BeforeOnset { t, t0: self.t0 });
        }
        if !(self.c > 0.0) || self.t0 == 0 {
            return Err(Error::InvalidArgument("gate constants must be positive".into()));
        }
        let d = self.d as f64;
        let lam_t = self.c * (t as f64).sqrt();
        let lam_0 = self.c * (self.t0 as f64).sqrt();
        let ratio = lam_0 / lam_t;
        Ok((1.0 + ratio)
            * (2.0 * (1.0 / self.delta).ln()
                + (logdet_v - d * lam_t.ln())
                + d * ratio.ln_1p()
                + d * (lam_t / lam_0).ln()))
    }

    pub fn at(&self, t: u64, logdet_v: f64, lambda_t: f64) -> Result<f64> {
        let psi = self.psi(t, logdet_v)?;
        let root = (psi.max(0.0) / self.m0()).sqrt() + lambda_t.sqrt() * self.bound_b;
        let factor = 2.0 * (1.0 + 2.0 * self.bound_l * self.bound_b);
        Ok((factor * root).powi(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::PairIndex;
    use crate::rng::RngState;
    use approx::assert_relative_eq;

    const SIGMA_PRIME_1: f64 = 0.196_611_933_241_481_85;

    fn line() -> Vec<Vec<f64>> {
        vec![vec![1.0], vec![0.0]]
    }

    fn mirror() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]
    }

    fn random_model(rng: &mut RngState, k: usize, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let theta: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        let x = (0..k).map(|_| (0..d).map(|_| rng.gaussian()).collect()).collect();
        (theta, x)
    }

    fn random_simplex(rng: &mut RngState, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn fisher_examples() {
        let h = fisher_matrix(&[0.0], &[1.0], &line()).unwrap();
        assert_relative_eq!(h.get(0, 0), 0.25 + FISHER_RIDGE);
        let x = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]];
        // Pairs (0,1) -> e1, (0,2) -> (1,-1), (1,2) -> -e2.
        let h = fisher_matrix(&[0.0, 0.0], &[0.5, 0.0, 0.5], &x).unwrap();
        assert_relative_eq!(h.get(0, 0), 0.125 + FISHER_RIDGE);
        assert_relative_eq!(h.get(1, 1), 0.125 + FISHER_RIDGE);
        assert_eq!(h.get(0, 1), 0.0);
        assert!(matches!(
            fisher_matrix(&[0.0, 0.0], &[1.0, 0.0, 1.0], &x),
            Err(Error::NotOnSimplex { .. })
        ));
    }

    #[test]
    fn gap_ratio_examples() {
        let psi = gap_ratio(&[1.0], &[1.0], &line(), 1).unwrap();
        assert_relative_eq!(psi, SIGMA_PRIME_1 / 2.0, max_relative = 1e-9);
        assert_relative_eq!(psi, 0.098_305_966_620_740_926, max_relative = 1e-9);
        let flipped = vec![vec![-1.0], vec![0.0]];
        assert_relative_eq!(gap_ratio(&[-1.0], &[1.0], &flipped, 1).unwrap(), psi, max_relative = 1e-12);
        let tied = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 5.0]];
        assert!(gap_ratio(&[1.0, 0.0], &[0.4, 0.3, 0.3], &tied, 1).is_err());
    }

    #[test]
    fn ties_in_the_score_argmax_are_rejected() {
        let x = vec![vec![1.0], vec![1.0], vec![0.0]];
        assert!(matches!(
            DesignObjective::new(&[1.0], &x),
            Err(Error::NonUniqueScoreArgmax { first: 0, second: 1 })
        ));
    }

    #[test]
    fn psi_gradient_matches_finite_differences() {
        let mut rng = RngState::from_seed(5);
        for _ in 0..10 {
            let (theta, x) = random_model(&mut rng, 5, 3);
            let obj = DesignObjective::new(&theta, &x).unwrap();
            let w = random_simplex(&mut rng, pair_count(5));
            for idx in 0..obj.others().len() {
                let grad = obj.psi_gradient(&w, idx).unwrap();
                for ab in 0..w.len() {
                    let h = 1e-6;
                    let mut up = w.clone();
                    let mut down = w.clone();
                    up[ab] += h;
                    down[ab] -= h;
                    let fd = (obj.psi(&up).unwrap()[idx] - obj.psi(&down).unwrap()[idx]) / (2.0 * h);
                    assert_relative_eq!(grad[ab], fd, max_relative = 1e-5, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn single_pair_is_trivial() {
        for gamma in [0.0, 0.3] {
            let a = solve_allocation(&[0.7], &line(), gamma).unwrap();
            assert_eq!(a.weights(), &[1.0]);
        }
    }

    #[test]
    fn mirror_instance_gets_a_symmetric_design() {
        let a = solve_allocation(&[1.0, 0.0], &mirror(), 0.1).unwrap();
        let w01 = a.weight(PairIndex::new(0, 1));
        let w02 = a.weight(PairIndex::new(0, 2));
        assert!((w01 - w02).abs() <= 1e-4, "{:?}", a.weights());
        // Cross-check against a 0.01 simplex grid.
        let obj = DesignObjective::new(&[1.0, 0.0], &mirror()).unwrap();
        let got = obj.value(a.weights(), 0.1).unwrap();
        for p in 0..=100 {
            for q in 0..=(100 - p) {
                let w = [p as f64 / 100.0, q as f64 / 100.0, (100 - p - q) as f64 / 100.0];
                assert!(obj.value(&w, 0.1).unwrap() <= got + 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_regularisation_is_continuous() {
        let mut rng = RngState::from_seed(12);
        let (theta, x) = random_model(&mut rng, 5, 3);
        let obj = DesignObjective::new(&theta, &x).unwrap();
        let u = Allocation::uniform(5);
        let (_, v0) = obj.maximize(0.0, u.weights(), &SolverOptions::default()).unwrap();
        let (_, v1) = obj.maximize(1e-6, u.weights(), &SolverOptions::default()).unwrap();
        assert!((v0 - v1).abs() <= 1e-5, "{v0} vs {v1}");
    }

    #[test]
    fn solution_dominates_uniform_and_vertices() {
        let mut rng = RngState::from_seed(9);
        for gamma in [0.0, 0.01] {
            let (theta, x) = random_model(&mut rng, 6, 3);
            let obj = DesignObjective::new(&theta, &x).unwrap();
            let n = pair_count(6);
            let (a, v) = obj.maximize(gamma, Allocation::uniform(6).weights(), &SolverOptions::default()).unwrap();
            assert_relative_eq!(obj.value(a.weights(), gamma).unwrap(), v);
            assert!(v >= obj.value(Allocation::uniform(6).weights(), gamma).unwrap());
            for id in 0..n {
                let mut w = vec![0.0; n];
                w[id] = 1.0;
                assert!(v >= obj.value(&w, gamma).unwrap());
            }
        }
    }

    #[test]
    fn random_starts_agree_under_regularisation() {
        let mut rng = RngState::from_seed(31);
        let (theta, x) = random_model(&mut rng, 5, 2);
        let n = pair_count(5);
        let reference = solve_allocation(&theta, &x, 0.1).unwrap();
        for _ in 0..10 {
            let init = Allocation::new(5, random_simplex(&mut rng, n)).unwrap();
            let a = solve_allocation_from(&theta, &x, 0.1, &init, &SolverOptions::default()).unwrap();
            assert!(a.max_abs_diff(&reference) <= 1e-4, "{:?} vs {:?}", a.weights(), reference.weights());
        }
    }

    #[test]
    fn min_psi_is_concave() {
        let mut rng = RngState::from_seed(44);
        let (theta, x) = random_model(&mut rng, 5, 3);
        let obj = DesignObjective::new(&theta, &x).unwrap();
        let n = pair_count(5);
        for _ in 0..100 {
            let w1 = random_simplex(&mut rng, n);
            let w2 = random_simplex(&mut rng, n);
            let a = rng.uniform();
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(p, q)| a * p + (1.0 - a) * q).collect();
            let lhs = obj.min_psi(&mix).unwrap();
            let rhs = a * obj.min_psi(&w1).unwrap() + (1.0 - a) * obj.min_psi(&w2).unwrap();
            assert!(lhs >= rhs - 1e-9);
        }
    }

    #[test]
    fn surrogate_time_examples() {
        assert_relative_eq!(surrogate_time(&[1.0], &line()).unwrap(), 10.172_322_539_260_975, max_relative = 1e-9);
        let mut rng = RngState::from_seed(2);
        let (theta, x) = random_model(&mut rng, 4, 2);
        let u = surrogate_time(&theta, &x).unwrap();
        assert!(u > 0.0 && u.is_finite());
        let perm = [2, 0, 3, 1];
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        assert_relative_eq!(surrogate_time(&theta, &xp).unwrap(), u, max_relative = 1e-4);
    }

    #[test]
    fn structured_glr_examples() {
        let mut l = TrialLedger::with_features(&line());
        for _ in 0..100 {
            l.record(PairIndex::new(0, 1), true);
        }
        let z = structured_glr(&l, &[1.0], &line(), 0.1).unwrap();
        assert_relative_eq!(z, 9.880_596_662_074_092_6, max_relative = 1e-12);
        assert_eq!(structured_glr(&l, &[0.0], &line(), 0.1).unwrap(), 0.0);
        for _ in 0..100 {
            l.record(PairIndex::new(0, 1), true);
        }
        let z2 = structured_glr(&l, &[1.0], &line(), 1e-9).unwrap();
        assert_relative_eq!(z2, 2.0 * z, max_relative = 0.01);
    }

    #[test]
    fn structured_glr_is_invariant_to_joint_sign_flip() {
        let mut rng = RngState::from_seed(6);
        let (theta, x) = random_model(&mut rng, 5, 3);
        let mut l = TrialLedger::with_features(&x);
        let neg_x: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let mut ln = TrialLedger::with_features(&neg_x);
        for _ in 0..50 {
            let a = rng.index(5);
            let b = (a + 1 + rng.index(4)) % 5;
            let o = rng.bernoulli(0.5);
            l.record(PairIndex::new(a, b), o);
            ln.record(PairIndex::new(a, b), o);
        }
        let neg_t: Vec<f64> = theta.iter().map(|v| -v).collect();
        assert_relative_eq!(
            structured_glr(&l, &theta, &x, 0.2).unwrap(),
            structured_glr(&ln, &neg_t, &neg_x, 0.2).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn beta_threshold_example() {
        let beta = BetaThreshold {
            delta: 0.05,
            d: 1,
            c: 1.0,
            t0: 1,
            bound_b: 1.0,
            bound_l: 1.0,
        };
        assert_relative_eq!(beta.m0(), SIGMA_PRIME_1, max_relative = 1e-14);
        assert_relative_eq!(beta.psi(4, 4f64.ln()).unwrap(), 11.674_836_024_504_055, max_relative = 1e-13);
        assert_relative_eq!(beta.at(4, 4f64.ln(), 0.5).unwrap(), 2548.001_306_357_090_6, max_relative = 1e-13);
        assert!(matches!(
            BetaThreshold { t0: 5, ..beta }.at(4, 0.0, 0.5),
            Err(Error::BeforeOnset { t: 4, t0: 5 })
        ));
        let mut prev = f64::INFINITY;
        for delta in [1e-6, 1e-3, 0.05, 0.3, 0.9, 0.999_999] {
            let b = BetaThreshold { delta, ..beta }.at(4, 4f64.ln(), 0.5).unwrap();
            assert!(b > 0.0 && b <= prev);
            prev = b;
        }
    }

    #[test]
    fn gamma_schedule_examples() {
        assert_eq!(gamma_schedule(1), 1.0);
        assert_relative_eq!(gamma_schedule(256), 0.5, max_relative = 1e-15);
    }
}
