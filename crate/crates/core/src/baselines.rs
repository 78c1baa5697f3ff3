//! Benchmark pair-selection rules. They share the engine's ledger, stopping
//! rule and decision rule; only the choice of the next pair differs.

use rand_distr::{Beta, Distribution};

use crate::instances::{pair_count, PairIndex};
use crate::ledger::TrialLedger;
use crate::rng::RngState;
use crate::unstructured::{best_from_upper, PairTable};

/// Cycles through the canonical pairs in order.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    cursor: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

pub fn round_robin_next(state: &mut RoundRobin, k: usize) -> PairIndex {
    let n = pair_count(k);
    let pair = pair_from_id(k, state.cursor % n);
    state.cursor = (state.cursor + 1) % n;
    pair
}

fn pair_from_id(k: usize, id: usize) -> PairIndex {
    let mut rest = id;
    for i in 0..k {
        let row = k - 1 - i;
        if rest < row {
            return PairIndex { i, j: i + 1 + rest };
        }
        rest -= row;
    }
    panic!("pair id {id} out of range for K = {k}")
}

/// Uniform over the canonical pairs.
pub fn random_pair_next(k: usize, rng: &mut RngState) -> PairIndex {
    pair_from_id(k, rng.index(pair_count(k)))
}

/// Pair joining the empirical best (argmax-min of the means) with the
/// opponent most likely to beat it; ties go to the lowest index.
pub fn greedy_pair(table: &PairTable, upper: &[f64]) -> PairIndex {
    let best = best_from_upper(table, upper);
    let mut opponent = usize::MAX;
    let mut lowest = f64::INFINITY;
    for j in (0..table.k()).filter(|&j| j != best) {
        let m = table.mean(upper, best, j);
        if m < lowest {
            lowest = m;
            opponent = j;
        }
    }
    PairIndex::new(best, opponent)
}

/// With probability `eps` a uniform pair, otherwise `greedy()`.
pub fn eps_greedy_next(k: usize, rng: &mut RngState, eps: f64, greedy: impl FnOnce() -> PairIndex) -> PairIndex {
    if rng.uniform() < eps {
        random_pair_next(k, rng)
    } else {
        greedy()
    }
}

fn beta_draws(ledger: &TrialLedger, rng: &mut RngState) -> Vec<f64> {
    (0..ledger.pairs().len())
        .map(|id| beta_draw(ledger, id, rng))
        .collect()
}

fn beta_draw(ledger: &TrialLedger, id: usize, rng: &mut RngState) -> f64 {
    let n = ledger.counts()[id] as f64;
    let w = ledger.win_counts()[id] as f64;
    Beta::new(1.0 + w, 1.0 + n - w)
        .expect("Beta parameters are positive")
        .sample(rng)
}

/// Thompson-style selection: a candidate maximising the worst sampled
/// preference, then an opponent from an independent posterior draw.
pub fn double_ts_next(ledger: &TrialLedger, table: &PairTable, rng: &mut RngState) -> PairIndex {
    let k = ledger.k();
    let candidate = double_ts_candidate(ledger, table, rng);
    let mut opponent = usize::MAX;
    let mut top = f64::NEG_INFINITY;
    for j in (0..k).filter(|&j| j != candidate) {
        let id = table.id(candidate, j);
        let draw = beta_draw(ledger, id, rng);
        // theta'(j, candidate)
        let v = if j < candidate { draw } else { 1.0 - draw };
        if v > top {
            top = v;
            opponent = j;
        }
    }
    PairIndex::new(candidate, opponent)
}

/// Argmax-min policy of one joint posterior draw.
pub fn double_ts_candidate(ledger: &TrialLedger, table: &PairTable, rng: &mut RngState) -> usize {
    best_from_upper(table, &beta_draws(ledger, rng))
}

/// Upper confidence bound on `mu(i, j)`.
pub fn rucb_bound(ledger: &TrialLedger, table: &PairTable, i: usize, j: usize, alpha: f64) -> f64 {
    let id = table.id(i, j);
    let n = ledger.counts()[id];
    if n == 0 {
        return 1.0;
    }
    let t = ledger.total().max(1) as f64;
    let m = ledger.mean_by_id(id);
    let oriented = if i < j { m } else { 1.0 - m };
    oriented + (alpha * t.ln() / n as f64).sqrt()
}

/// Relative-UCB-style selection.
pub fn rucb_next(ledger: &TrialLedger, table: &PairTable, rng: &mut RngState, alpha: f64) -> PairIndex {
    let k = ledger.k();
    let plausible: Vec<usize> = (0..k)
        .filter(|&i| (0..k).filter(|&j| j != i).all(|j| rucb_bound(ledger, table, i, j, alpha) >= 0.5))
        .collect();
    let candidate = if plausible.is_empty() {
        rng.index(k)
    } else {
        plausible[rng.index(plausible.len())]
    };
    let mut opponent = usize::MAX;
    let mut top = f64::NEG_INFINITY;
    for j in (0..k).filter(|&j| j != candidate) {
        let u = rucb_bound(ledger, table, j, candidate, alpha);
        if u > top {
            top = u;
            opponent = j;
        }
    }
    PairIndex::new(candidate, opponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::all_pairs;
    use approx::assert_relative_eq;

    #[test]
    fn round_robin_cycles_in_canonical_order() {
        let mut s = RoundRobin::new();
        let seq: Vec<PairIndex> = (0..4).map(|_| round_robin_next(&mut s, 3)).collect();
        assert_eq!(seq[0], PairIndex::new(0, 1));
        assert_eq!(seq[1], PairIndex::new(0, 2));
        assert_eq!(seq[2], PairIndex::new(1, 2));
        assert_eq!(seq[3], PairIndex::new(0, 1));
        for k in 2..7 {
            for (id, p) in all_pairs(k).into_iter().enumerate() {
                assert_eq!(pair_from_id(k, id), p);
            }
        }
    }

    #[test]
    fn random_pair_is_uniform() {
        let mut rng = RngState::from_seed(3);
        assert_eq!(random_pair_next(2, &mut rng), PairIndex::new(0, 1));
        let n = 100_000;
        let mut freq = vec![0usize; 6];
        for _ in 0..n {
            freq[random_pair_next(4, &mut rng).id(4)] += 1;
        }
        for f in freq {
            assert!((f as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn eps_greedy_examples() {
        let table = PairTable::new(3);
        let upper = [0.9, 0.6, 0.7];
        let mut rng = RngState::from_seed(1);
        for _ in 0..20 {
            assert_eq!(
                eps_greedy_next(3, &mut rng, 0.0, || greedy_pair(&table, &upper)),
                PairIndex::new(0, 2)
            );
        }
        // Untested pairs default to 1/2: ties resolve to the lowest index.
        assert_eq!(greedy_pair(&table, &[0.5, 0.5, 0.5]), PairIndex::new(0, 1));
        // eps = 1 consumes the same draws as a random pair after the coin.
        let mut a = RngState::from_seed(4);
        let mut b = RngState::from_seed(4);
        for _ in 0..50 {
            let x = eps_greedy_next(4, &mut a, 1.0, || unreachable!());
            b.uniform();
            assert_eq!(x, random_pair_next(4, &mut b));
        }
    }

    #[test]
    fn double_ts_with_flat_posteriors_is_exchangeable() {
        let ledger = TrialLedger::new(3);
        let table = PairTable::new(3);
        let mut rng = RngState::from_seed(8);
        let mut freq = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            freq[double_ts_candidate(&ledger, &table, &mut rng)] += 1;
        }
        for f in freq {
            assert!((f as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{freq:?}");
        }
    }

    #[test]
    fn double_ts_candidate_follows_overwhelming_data() {
        let mut ledger = TrialLedger::new(2);
        for _ in 0..1000 {
            ledger.record(PairIndex::new(0, 1), true);
        }
        let table = PairTable::new(2);
        let mut rng = RngState::from_seed(5);
        let hits = (0..10_000)
            .filter(|_| double_ts_candidate(&ledger, &table, &mut rng) == 0)
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
        assert_eq!(double_ts_next(&ledger, &table, &mut rng), PairIndex::new(0, 1));
    }

    #[test]
    fn rucb_examples() {
        let table = PairTable::new(2);
        let fresh = TrialLedger::new(2);
        assert_eq!(rucb_bound(&fresh, &table, 0, 1, 0.51), 1.0);
        assert_eq!(rucb_bound(&fresh, &table, 1, 0, 0.51), 1.0);
        let mut ledger = TrialLedger::new(2);
        for s in 0..100 {
            ledger.record(PairIndex::new(0, 1), s < 90);
        }
        let u10 = rucb_bound(&ledger, &table, 1, 0, 0.51);
        assert_relative_eq!(u10, 0.253_252_627_868_298_77, max_relative = 1e-12);
        let mut rng = RngState::from_seed(2);
        assert_eq!(rucb_next(&ledger, &table, &mut rng, 0.51), PairIndex::new(0, 1));
    }

    #[test]
    fn rucb_bound_shrinks_with_more_data() {
        let table = PairTable::new(3);
        let mut prev = f64::INFINITY;
        for n in [10u64, 40, 160, 640] {
            let mut l = TrialLedger::new(3);
            for s in 0..n {
                l.record(PairIndex::new(0, 1), s % 2 == 0);
            }
            for _ in n..1000 {
                l.record(PairIndex::new(1, 2), true);
            }
            let u = rucb_bound(&l, &table, 0, 1, 0.51);
            assert!(u < prev);
            prev = u;
        }
    }
}
