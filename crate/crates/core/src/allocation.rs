//! Sampling proportions over canonical pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{all_pairs, pair_count, PairIndex};

const SIMPLEX_TOL: f64 = 1e-9;

/// Nonnegative weights over `S`, indexed by canonical pair id, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    k: usize,
    weights: Vec<f64>,
}

impl Allocation {
    pub fn new(k: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != pair_count(k) {
            return Err(Error::InvalidArgument(format!(
                "K = {k} needs {} weights, got {}",
                pair_count(k),
                weights.len()
            )));
        }
        check_simplex(&weights)?;
        Ok(Self { k, weights })
    }

    pub(crate) fn from_raw(k: usize, weights: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&weights).is_ok());
        Self { k, weights }
    }

    pub fn uniform(k: usize) -> Self {
        let n = pair_count(k);
        Self {
            k,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// All mass on one pair.
    pub fn vertex(k: usize, pair: PairIndex) -> Self {
        let mut weights = vec![0.0; pair_count(k)];
        weights[pair.id(k)] = 1.0;
        Self { k, weights }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, pair: PairIndex) -> f64 {
        self.weights[pair.id(self.k)]
    }

    /// Pairs with positive weight, in canonical order.
    pub fn support(&self) -> Vec<(PairIndex, f64)> {
        all_pairs(self.k)
            .into_iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| (p, w))
            .collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn max_abs_diff(&self, other: &Allocation) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn check_simplex(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > SIMPLEX_TOL || min < 0.0 || !sum.is_finite() {
        return Err(Error::NotOnSimplex { sum, min });
    }
    Ok(())
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` by sorting and
/// thresholding.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (idx, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let candidate = (cumsum - 1.0) / (idx + 1) as f64;
        if ui - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(Allocation::new(2, vec![2.0]).is_err());
        assert!(Allocation::new(3, vec![0.5, 0.6, -0.1]).is_err());
        assert!(Allocation::new(3, vec![0.5, 0.5]).is_err());
        assert!(Allocation::new(3, vec![0.2, 0.3, 0.5]).is_ok());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[3.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex_and_is_closest(v in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let p = project_simplex(&v);
            prop_assert!(check_simplex(&p).is_ok());
            // Optimality: <v - p, q - p> <= 0 for the simplex vertices q.
            for k in 0..v.len() {
                let inner: f64 = (0..v.len())
                    .map(|m| (v[m] - p[m]) * (if m == k { 1.0 } else { 0.0 } - p[m]))
                    .sum();
                prop_assert!(inner <= 1e-9);
            }
        }
    }
}
