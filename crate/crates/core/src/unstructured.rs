//! Optimal allocation, characteristic time, GLR statistic and stopping
//! thresholds when the preference matrix is unconstrained.
//!
//! Everything reduces to one fact: ruling out a suboptimal policy `i` only
//! requires pushing every pair where some `j` beats `i` back to 1/2, so the
//! per-sample information for eliminating `i` through opponent `j` is
//! `d(mu, 1/2)` on that pair. The hot-path variants work directly on the
//! upper-triangle means and cached `d(mu, 1/2)` values kept by the sampler.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::divergence::{bern_kl, bern_kl_binary};
use crate::error::{Error, Result};
use crate::instances::{pair_count, PreferenceInstance};
use crate::ledger::TrialLedger;

/// Floor applied to `d_i` before taking reciprocals in the plug-in allocation.
pub const D_FLOOR: f64 = 1e-12;

/// Most informative opponent for eliminating `policy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpponentInfo {
    pub policy: usize,
    pub opponent: usize,
    /// `d_i`: 0 when no opponent strictly beats `policy`.
    pub info: f64,
}

/// Lookup from ordered `(i, j)` to canonical pair id.
#[derive(Debug, Clone)]
pub struct PairTable {
    k: usize,
    ids: Vec<usize>,
}

impl PairTable {
    pub fn new(k: usize) -> Self {
        let mut ids = vec![usize::MAX; k * k];
        let mut id = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                ids[i * k + j] = id;
                ids[j * k + i] = id;
                id += 1;
            }
        }
        Self { k, ids }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn id(&self, i: usize, j: usize) -> usize {
        self.ids[i * self.k + j]
    }

    /// `mu(i, j)` from canonical upper-triangle means.
    #[inline]
    pub fn mean(&self, upper: &[f64], i: usize, j: usize) -> f64 {
        let m = upper[self.id(i, j)];
        if i < j {
            m
        } else {
            1.0 - m
        }
    }

    /// Whether `j` beats `i` under `upper`.
    #[inline]
    pub fn beats(&self, upper: &[f64], j: usize, i: usize) -> bool {
        let m = upper[self.id(i, j)];
        if j < i {
            m > 0.5
        } else {
            m < 0.5
        }
    }
}

/// Canonical means and their divergences from 1/2.
pub fn upper_and_info(mu: &PreferenceInstance) -> (Vec<f64>, Vec<f64>) {
    let upper = mu.upper();
    let info = upper.iter().map(|&m| bern_kl(m, 0.5)).collect();
    (upper, info)
}

pub fn best_from_upper(table: &PairTable, upper: &[f64]) -> usize {
    let k = table.k();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..k {
        let mut worst = f64::INFINITY;
        for j in 0..k {
            if j != i {
                worst = worst.min(table.mean(upper, i, j));
            }
        }
        if worst > best_val {
            best = i;
            best_val = worst;
        }
    }
    best
}

pub fn opponent_from(table: &PairTable, upper: &[f64], info: &[f64], i: usize) -> OpponentInfo {
    let k = table.k();
    let mut found: Option<(usize, f64)> = None;
    for j in (0..k).filter(|&j| j != i) {
        if table.beats(upper, j, i) {
            let d = info[table.id(i, j)];
            if found.is_none_or(|(_, best)| d > best) {
                found = Some((j, d));
            }
        }
    }
    match found {
        Some((opponent, info)) => OpponentInfo {
            policy: i,
            opponent,
            info,
        },
        None => {
            let mut opponent = usize::MAX;
            let mut gap = f64::INFINITY;
            for j in (0..k).filter(|&j| j != i) {
                let g = (upper[table.id(i, j)] - 0.5).abs();
                if g < gap {
                    gap = g;
                    opponent = j;
                }
            }
            OpponentInfo {
                policy: i,
                opponent,
                info: 0.0,
            }
        }
    }
}

/// Plug-in allocation around `best`: pair `(i, opponent(i))` gets weight
/// proportional to `1 / max(d_i, D_FLOOR)`.
pub fn allocation_from(table: &PairTable, upper: &[f64], info: &[f64], best: usize) -> Allocation {
    let k = table.k();
    let mut weights = vec![0.0; pair_count(k)];
    let mut total = 0.0;
    for i in (0..k).filter(|&i| i != best) {
        let opp = opponent_from(table, upper, info, i);
        let w = 1.0 / opp.info.max(D_FLOOR);
        weights[table.id(i, opp.opponent)] += w;
        total += w;
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Allocation::from_raw(k, weights)
}

/// `Z = min_{i != best} sum_{j beats i} N_ij d(mu_ij, 1/2)`.
pub fn glr_from(table: &PairTable, upper: &[f64], info: &[f64], counts: &[u64], best: usize) -> f64 {
    let k = table.k();
    let mut z = f64::INFINITY;
    for i in (0..k).filter(|&i| i != best) {
        let mut evidence = 0.0;
        for j in (0..k).filter(|&j| j != i) {
            if table.beats(upper, j, i) {
                let id = table.id(i, j);
                evidence += counts[id] as f64 * info[id];
            }
        }
        z = z.min(evidence);
        if z == 0.0 {
            break;
        }
    }
    if z.is_finite() {
        z
    } else {
        0.0
    }
}

pub fn informative_opponent(mu: &PreferenceInstance, i: usize) -> OpponentInfo {
    let table = PairTable::new(mu.k());
    let (upper, info) = upper_and_info(mu);
    opponent_from(&table, &upper, &info, i)
}

/// Closed-form optimal allocation. Requires a unique undominated policy.
pub fn optimal_allocation(mu: &PreferenceInstance) -> Result<Allocation> {
    let best = mu.validate().unique_best().ok_or(Error::NoUniqueBest)?;
    let table = PairTable::new(mu.k());
    let (upper, info) = upper_and_info(mu);
    Ok(allocation_from(&table, &upper, &info, best))
}

/// Value of the reduced max-min program at `omega`:
/// `min_{i != i*} sum_{j beats i} omega_ij d(mu_ij, 1/2)`.
pub fn allocation_value(mu: &PreferenceInstance, omega: &Allocation) -> f64 {
    let table = PairTable::new(mu.k());
    let (upper, info) = upper_and_info(mu);
    let best = mu.best_policy();
    let k = mu.k();
    (0..k)
        .filter(|&i| i != best)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i && table.beats(&upper, j, i))
                .map(|j| {
                    let id = table.id(i, j);
                    omega.weights()[id] * info[id]
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `T*(mu) = sum_{k != i*} 1 / d_k`.
pub fn characteristic_time(mu: &PreferenceInstance) -> Result<f64> {
    let best = mu.validate().unique_best().ok_or(Error::NoUniqueBest)?;
    let table = PairTable::new(mu.k());
    let (upper, info) = upper_and_info(mu);
    let mut total = 0.0;
    for i in (0..mu.k()).filter(|&i| i != best) {
        let opp = opponent_from(&table, &upper, &info, i);
        if opp.info <= 0.0 {
            return Err(Error::InfiniteCharacteristicTime { policy: i });
        }
        total += 1.0 / opp.info;
    }
    Ok(total)
}

/// `T*(mu) kl(delta, 1 - delta)`: expected-sample lower bound of any
/// delta-correct experiment.
pub fn lower_bound_samples(mu: &PreferenceInstance, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(characteristic_time(mu)? * bern_kl_binary(delta, 1.0 - delta))
}

/// GLR statistic of a ledger against its empirical means.
pub fn glr_statistic(ledger: &TrialLedger, mu_hat: &PreferenceInstance) -> f64 {
    let table = PairTable::new(mu_hat.k());
    let (upper, info) = upper_and_info(mu_hat);
    let best = best_from_upper(&table, &upper);
    glr_from(&table, &upper, &info, ledger.counts(), best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `2 ln((ln t + 1) / delta)`.
    #[default]
    Heuristic,
    /// `ln(C t^2 ln(1/delta)^(2|S|+1) / delta)` (unstructured) or
    /// `beta(delta, t)` (structured).
    Theoretical,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "theoretical" => Ok(Self::Theoretical),
            other => Err(Error::InvalidArgument(format!(
                "unknown threshold mode {other:?} (expected heuristic|theoretical)"
            ))),
        }
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta = {delta} must be in (0, 1)")))
    }
}

/// Heuristic stopping threshold `2 ln((ln t + 1) / delta)`.
pub fn heuristic_threshold(delta: f64, t: u64) -> f64 {
    2.0 * (((t.max(1) as f64).ln() + 1.0) / delta).ln()
}

/// Stopping threshold `rho(delta, t)`.
///
/// The theoretical form only needs `C` "large enough"; the default `C = 1`
/// is not calibrated and exists for experimentation.
pub fn rho_threshold(delta: f64, t: u64, mode: ThresholdMode, c: f64, s_size: usize) -> Result<f64> {
    check_delta(delta)?;
    if t == 0 {
        return Err(Error::InvalidArgument("t must be at least 1".into()));
    }
    Ok(match mode {
        ThresholdMode::Heuristic => heuristic_threshold(delta, t),
        ThresholdMode::Theoretical => {
            let t = t as f64;
            c.ln() + 2.0 * t.ln() + (2 * s_size + 1) as f64 * (1.0 / delta).ln().ln() - delta.ln()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::PairIndex;
    use approx::assert_relative_eq;

    const KL_08: f64 = 0.192_744_757_021_757_43;
    const KL_07: f64 = 0.082_282_878_505_051_85;
    const KL_06: f64 = 0.020_135_513_550_688_873;

    fn three() -> PreferenceInstance {
        PreferenceInstance::from_upper(3, &[0.8, 0.7, 0.6]).unwrap()
    }

    #[test]
    fn opponent_examples() {
        let mu = three();
        let o1 = informative_opponent(&mu, 1);
        assert_eq!(o1.opponent, 0);
        assert_relative_eq!(o1.info, KL_08, max_relative = 1e-14);
        let o2 = informative_opponent(&mu, 2);
        assert_eq!(o2.opponent, 0);
        assert_relative_eq!(o2.info, KL_07, max_relative = 1e-14);
        // The other beater of 2 is less informative.
        assert_relative_eq!(bern_kl(0.6, 0.5), KL_06, max_relative = 1e-13);
        assert!(KL_06 < o2.info);
    }

    #[test]
    fn opponent_of_unbeaten_policy_has_zero_info() {
        let cycle = PreferenceInstance::from_upper(3, &[0.6, 0.4, 0.6]).unwrap();
        let best_of_nobody = PreferenceInstance::from_upper(3, &[0.8, 0.7, 0.6]).unwrap();
        assert_eq!(informative_opponent(&best_of_nobody, 0).info, 0.0);
        // In the cycle everyone is beaten once; remove a loss to get an unbeaten policy.
        for i in 0..3 {
            assert!(informative_opponent(&cycle, i).info > 0.0);
        }
        let tie = PreferenceInstance::from_upper(3, &[0.5, 0.7, 0.6]).unwrap();
        let o = informative_opponent(&tie, 0);
        assert_eq!((o.opponent, o.info), (1, 0.0));
    }

    #[test]
    fn optimal_allocation_examples() {
        let w = optimal_allocation(&three()).unwrap();
        let expected01 = 0.299_180_401_807_406_86;
        assert_relative_eq!(w.weight(PairIndex::new(0, 1)), expected01, max_relative = 1e-13);
        assert_relative_eq!(w.weight(PairIndex::new(0, 2)), 1.0 - expected01, max_relative = 1e-13);
        assert_eq!(w.weight(PairIndex::new(1, 2)), 0.0);

        let two = PreferenceInstance::from_upper(2, &[0.8]).unwrap();
        assert_eq!(optimal_allocation(&two).unwrap().weights(), &[1.0]);

        let sym = PreferenceInstance::from_upper(3, &[0.8, 0.8, 0.5]).unwrap();
        let w = optimal_allocation(&sym).unwrap();
        assert_relative_eq!(w.weight(PairIndex::new(0, 1)), 0.5);
        assert_relative_eq!(w.weight(PairIndex::new(0, 2)), 0.5);
    }

    #[test]
    fn optimal_allocation_rejects_instances_outside_h() {
        let cycle = PreferenceInstance::from_upper(3, &[0.6, 0.4, 0.6]).unwrap();
        assert!(matches!(optimal_allocation(&cycle), Err(Error::NoUniqueBest)));
    }

    #[test]
    fn characteristic_time_examples() {
        assert_relative_eq!(
            characteristic_time(&three()).unwrap(),
            17.341_405_177_627_276,
            max_relative = 1e-13
        );
        let two = PreferenceInstance::from_upper(2, &[0.8]).unwrap();
        assert_relative_eq!(characteristic_time(&two).unwrap(), 5.188_208_568_947_574, max_relative = 1e-13);
        assert_relative_eq!(
            lower_bound_samples(&two, 0.05).unwrap(),
            13.748_727_188_209_117,
            max_relative = 1e-12
        );
    }

    #[test]
    fn characteristic_time_needs_a_unique_best() {
        // Policy 2 ties policy 0 and beats 1, so nobody is undominated.
        let mu = PreferenceInstance::from_upper(3, &[0.8, 0.5, 0.4]).unwrap();
        assert!(mu.validate().unique_best().is_none());
        assert!(matches!(characteristic_time(&mu), Err(Error::NoUniqueBest)));
    }

    #[test]
    fn glr_examples() {
        let mut ledger = TrialLedger::new(2);
        for n in 0..10 {
            ledger.record(PairIndex::new(0, 1), n < 8);
        }
        let mu_hat = ledger.empirical_means();
        assert_relative_eq!(glr_statistic(&ledger, &mu_hat), 1.927_447_570_217_574_3, max_relative = 1e-13);

        let mut tied = TrialLedger::new(2);
        tied.record(PairIndex::new(0, 1), true);
        tied.record(PairIndex::new(0, 1), false);
        assert_eq!(glr_statistic(&tied, &tied.empirical_means()), 0.0);
    }

    #[test]
    fn glr_three_policy_example() {
        let mut ledger = TrialLedger::new(3);
        for n in 0..30 {
            ledger.record(PairIndex::new(0, 1), n < 24);
            ledger.record(PairIndex::new(0, 2), n < 21);
        }
        let mu_hat = ledger.empirical_means();
        // mu_hat(1,2) defaults to 1/2: nobody beats on that pair.
        assert_relative_eq!(mu_hat.mu(0, 1), 0.8);
        assert_relative_eq!(mu_hat.mu(0, 2), 0.7);
        assert_relative_eq!(glr_statistic(&ledger, &mu_hat), 2.468_486_355_151_555_4, max_relative = 1e-12);
    }

    #[test]
    fn rho_examples() {
        assert_relative_eq!(
            rho_threshold(0.05, 1, ThresholdMode::Heuristic, 1.0, 1).unwrap(),
            5.991_464_547_107_982,
            max_relative = 1e-14
        );
        let delta = (-1.0f64).exp();
        assert_relative_eq!(
            rho_threshold(delta, 1, ThresholdMode::Theoretical, 1.0, 1).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let mut prev = 0.0;
        for t in 1..2000 {
            let r = rho_threshold(0.01, t, ThresholdMode::Heuristic, 1.0, 1).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        assert!(rho_threshold(0.0, 1, ThresholdMode::Heuristic, 1.0, 1).is_err());
        assert!(rho_threshold(0.1, 0, ThresholdMode::Heuristic, 1.0, 1).is_err());
    }

    #[test]
    fn allocation_is_invariant_to_common_scaling_of_information() {
        let mu = three();
        let table = PairTable::new(3);
        let (upper, info) = upper_and_info(&mu);
        let scaled: Vec<f64> = info.iter().map(|d| d * 7.5).collect();
        let a = allocation_from(&table, &upper, &info, 0);
        let b = allocation_from(&table, &upper, &scaled, 0);
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn characteristic_time_is_permutation_invariant() {
        let mu = PreferenceInstance::from_upper(4, &[0.7, 0.65, 0.8, 0.45, 0.6, 0.55]).unwrap();
        let base = characteristic_time(&mu).unwrap();
        let perm = [2, 0, 3, 1];
        let mut rows = vec![0.5; 16];
        for a in 0..4 {
            for b in 0..4 {
                rows[perm[a] * 4 + perm[b]] = mu.mu(a, b);
            }
        }
        let permuted = PreferenceInstance::from_matrix(4, rows).unwrap();
        assert_relative_eq!(characteristic_time(&permuted).unwrap(), base, max_relative = 1e-13);
    }

    #[test]
    fn support_size_at_most_k_minus_one() {
        let mu = PreferenceInstance::from_upper(4, &[0.7, 0.65, 0.8, 0.45, 0.6, 0.55]).unwrap();
        let w = optimal_allocation(&mu).unwrap();
        assert!(w.nonzeros() <= 3);
        assert_relative_eq!(w.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
