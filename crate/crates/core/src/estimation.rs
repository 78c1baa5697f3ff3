//! Regularised Bradley-Terry maximum likelihood and the projected estimator.
//!
//! The log-likelihood depends on the data only through per-pair counts and
//! wins, so every evaluation loops over the sampled pairs rather than over
//! individual records.

use crate::divergence::logistic;
use crate::error::{Error, Result};
use crate::ledger::TrialLedger;
use crate::linalg::{dot, norm, SymMatrix};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;
const PROJECTION_MAX_ITER: usize = 500;
const FD_STEP: f64 = 1e-6;

fn diffs(ledger: &TrialLedger) -> Result<&[Vec<f64>]> {
    ledger.diffs().ok_or_else(|| {
        Error::InvalidArgument("structured estimation needs a ledger built with features".into())
    })
}

fn dim(ledger: &TrialLedger) -> Result<usize> {
    Ok(diffs(ledger)?.first().map_or(0, Vec::len))
}

/// `ln sigma(u)` without overflow.
fn log_logistic(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// `L_t(theta) - (lambda / 2) ||theta||^2`.
pub fn objective(theta: &[f64], ledger: &TrialLedger, lambda: f64) -> Result<f64> {
    let z = diffs(ledger)?;
    let mut total = -0.5 * lambda * dot(theta, theta);
    for &id in ledger.touched() {
        let n = ledger.counts()[id] as f64;
        let w = ledger.win_counts()[id] as f64;
        let u = dot(theta, &z[id]);
        total += w * log_logistic(u) + (n - w) * log_logistic(-u);
    }
    Ok(total)
}

/// `sum_s D_s z_s`, the data part of the score.
fn win_moment(ledger: &TrialLedger, z: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for &id in ledger.touched() {
        let w = ledger.win_counts()[id] as f64;
        for (mi, zi) in m.iter_mut().zip(&z[id]) {
            *mi += w * zi;
        }
    }
    m
}

/// `g_t(theta) = sum_s sigma(theta^T z_s) z_s + lambda theta` and
/// `H_t(theta) = sum_s sigma'(theta^T z_s) z_s z_s^T + lambda I`.
pub fn g_and_h(theta: &[f64], ledger: &TrialLedger, lambda: f64) -> Result<(Vec<f64>, SymMatrix)> {
    let z = diffs(ledger)?;
    let d = theta.len();
    let mut g: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
    let mut h = SymMatrix::zeros(d);
    for &id in ledger.touched() {
        let n = ledger.counts()[id] as f64;
        let u = dot(theta, &z[id]);
        let s = logistic(u);
        for (gi, zi) in g.iter_mut().zip(&z[id]) {
            *gi += n * s * zi;
        }
        h.add_outer(n * s * (1.0 - s), &z[id]);
    }
    h.add_diagonal(lambda);
    Ok((g, h))
}

/// `g_t(theta)` alone.
pub fn g_map(theta: &[f64], ledger: &TrialLedger, lambda: f64) -> Result<Vec<f64>> {
    let z = diffs(ledger)?;
    let mut g: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
    for &id in ledger.touched() {
        let n = ledger.counts()[id] as f64;
        let s = logistic(dot(theta, &z[id]));
        for (gi, zi) in g.iter_mut().zip(&z[id]) {
            *gi += n * s * zi;
        }
    }
    Ok(g)
}

/// Regularised MLE `argmax_theta L_t(theta) - (lambda/2)||theta||^2` by
/// Newton's method with step halving.
pub fn reg_mle(ledger: &TrialLedger, lambda: f64, warm_start: Option<&[f64]>) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let z = diffs(ledger)?;
    let d = dim(ledger)?;
    let mut theta = match warm_start {
        Some(w) if w.len() == d => w.to_vec(),
        _ => vec![0.0; d],
    };
    let moment = win_moment(ledger, z, d);
    let scale: f64 = ledger
        .touched()
        .iter()
        .map(|&id| ledger.counts()[id] as f64 * norm(&z[id]))
        .sum::<f64>()
        .max(1.0);
    let tol = NEWTON_TOL * scale;

    let mut value = objective(&theta, ledger, lambda)?;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let (g, h) = g_and_h(&theta, ledger, lambda)?;
        let grad: Vec<f64> = moment.iter().zip(&g).map(|(m, gi)| m - gi).collect();
        grad_norm = norm(&grad);
        if grad_norm <= tol {
            return Ok(theta);
        }
        let chol = h.cholesky().ok_or_else(|| Error::SingularInformation {
            direction: grad.clone(),
        })?;
        let step = chol.solve(&grad);
        let mut alpha = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + alpha * s).collect();
            let cand_value = objective(&cand, ledger, lambda)?;
            if cand_value >= value - 1e-12 * value.abs().max(1.0) || alpha < 1e-10 {
                theta = cand;
                value = cand_value;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        grad_norm,
        iterate: theta,
    })
}

/// `(g(theta) - g(zeta))^T H(theta)^{-1} (g(theta) - g(zeta))`, the squared
/// projection objective.
pub fn projection_objective(theta: &[f64], g_zeta: &[f64], ledger: &TrialLedger, lambda: f64) -> Result<f64> {
    let (g, h) = g_and_h(theta, ledger, lambda)?;
    let r: Vec<f64> = g.iter().zip(g_zeta).map(|(a, b)| a - b).collect();
    let chol = h.cholesky().ok_or_else(|| Error::SingularInformation {
        direction: r.clone(),
    })?;
    Ok(chol.inv_quad_form(&r))
}

fn project_ball(theta: &mut [f64], radius: f64) {
    let n = norm(theta);
    if n > radius {
        let s = if n > 0.0 { radius / n } else { 0.0 };
        theta.iter_mut().for_each(|t| *t *= s);
    }
}

/// Projected estimator over the ball `||theta|| <= B`.
///
/// Returns `zeta` itself when feasible (objective 0). Otherwise runs
/// projected gradient descent on the projection objective with
/// central-difference gradients and Armijo backtracking, starting from the
/// radial projection of `zeta`, and returns the best feasible iterate.
pub fn project_estimator(zeta: &[f64], ledger: &TrialLedger, lambda: f64, bound_b: f64) -> Result<Vec<f64>> {
    if norm(zeta) <= bound_b {
        return Ok(zeta.to_vec());
    }
    if bound_b <= 0.0 {
        return Ok(vec![0.0; zeta.len()]);
    }
    let g_zeta = g_map(zeta, ledger, lambda)?;
    let f = |th: &[f64]| projection_objective(th, &g_zeta, ledger, lambda);

    let mut theta = zeta.to_vec();
    project_ball(&mut theta, bound_b);
    let mut value = f(&theta)?;
    let mut step = 1.0;
    for _ in 0..PROJECTION_MAX_ITER {
        let mut grad = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            grad[k] = (f(&up)? - f(&down)?) / (2.0 * FD_STEP);
        }
        if norm(&grad) == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            project_ball(&mut cand, bound_b);
            let decrease: f64 = grad.iter().zip(theta.iter().zip(&cand)).map(|(g, (t, c))| g * (t - c)).sum();
            let cand_value = f(&cand)?;
            if decrease > 0.0 && cand_value <= value - 1e-4 * decrease {
                theta = cand;
                value = cand_value;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(theta)
}

/// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
pub fn lambda_min(v: &SymMatrix) -> f64 {
    v.min_eigenvalue()
}

/// MLE regularisation schedule `lambda_t = t^{-1/2}`.
pub fn lambda_schedule(t: u64) -> f64 {
    (t.max(1) as f64).powf(-0.5)
}

/// Warm-started estimator kept across the steps of one experiment.
#[derive(Debug, Clone)]
pub struct BtEstimator {
    bound_b: f64,
    zeta: Vec<f64>,
    theta: Vec<f64>,
}

impl BtEstimator {
    pub fn new(d: usize, bound_b: f64) -> Self {
        Self {
            bound_b,
            zeta: vec![0.0; d],
            theta: vec![0.0; d],
        }
    }

    pub fn refit(&mut self, ledger: &TrialLedger, lambda: f64) -> Result<&[f64]> {
        self.zeta = reg_mle(ledger, lambda, Some(&self.zeta))?;
        self.theta = project_estimator(&self.zeta, ledger, lambda, self.bound_b)?;
        Ok(&self.theta)
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}
