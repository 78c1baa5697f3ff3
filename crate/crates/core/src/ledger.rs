//! Per-pair counts, wins and the chronological comparison log.

use serde::{Deserialize, Serialize};

use crate::instances::{all_pairs, pair_count, PairIndex, PreferenceInstance};
use crate::linalg::SymMatrix;

/// One duel: `outcome` is true iff policy `pair.i` won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub pair: PairIndex,
    pub outcome: bool,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct TrialLedger {
    k: usize,
    pairs: Vec<PairIndex>,
    counts: Vec<u64>,
    wins: Vec<u64>,
    records: Vec<ComparisonRecord>,
    /// Pair ids with at least one record, in order of first appearance.
    touched: Vec<usize>,
    diffs: Option<Vec<Vec<f64>>>,
    gram: Option<SymMatrix>,
}

impl TrialLedger {
    pub fn new(k: usize) -> Self {
        let n = pair_count(k);
        Self {
            k,
            pairs: all_pairs(k),
            counts: vec![0; n],
            wins: vec![0; n],
            records: Vec::new(),
            touched: Vec::new(),
            diffs: None,
            gram: None,
        }
    }

    /// Ledger that also maintains `V_t = sum_s z_s z_s^T` with
    /// `z = x_i - x_j` for every recorded canonical pair.
    pub fn with_features(features: &[Vec<f64>]) -> Self {
        let k = features.len();
        let d = features.first().map_or(0, Vec::len);
        let mut ledger = Self::new(k);
        ledger.diffs = Some(
            ledger
                .pairs
                .iter()
                .map(|p| {
                    features[p.i]
                        .iter()
                        .zip(&features[p.j])
                        .map(|(a, b)| a - b)
                        .collect()
                })
                .collect(),
        );
        ledger.gram = Some(SymMatrix::zeros(d));
        ledger
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pairs(&self) -> &[PairIndex] {
        &self.pairs
    }

    /// Total number of records, `t`.
    pub fn total(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn count(&self, pair: PairIndex) -> u64 {
        self.counts[pair.id(self.k)]
    }

    pub fn wins(&self, pair: PairIndex) -> u64 {
        self.wins[pair.id(self.k)]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn win_counts(&self) -> &[u64] {
        &self.wins
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// Feature difference `x_i - x_j` of pair id `id` (structured ledgers).
    pub fn diff(&self, id: usize) -> Option<&[f64]> {
        self.diffs.as_ref().map(|d| d[id].as_slice())
    }

    pub fn diffs(&self) -> Option<&[Vec<f64>]> {
        self.diffs.as_deref()
    }

    pub fn gram(&self) -> Option<&SymMatrix> {
        self.gram.as_ref()
    }

    pub fn record(&mut self, pair: PairIndex, outcome: bool) {
        let id = pair.id(self.k);
        if self.counts[id] == 0 {
            self.touched.push(id);
        }
        self.counts[id] += 1;
        if outcome {
            self.wins[id] += 1;
        }
        let step = self.records.len() as u64 + 1;
        self.records.push(ComparisonRecord { pair, outcome, step });
        if let (Some(diffs), Some(gram)) = (&self.diffs, &mut self.gram) {
            gram.add_outer(1.0, &diffs[id]);
        }
    }

    /// Empirical mean of pair id `id`; 1/2 when never sampled.
    #[inline]
    pub fn mean_by_id(&self, id: usize) -> f64 {
        match self.counts[id] {
            0 => 0.5,
            n => self.wins[id] as f64 / n as f64,
        }
    }

    /// Empirical preference matrix; never-sampled pairs default to 1/2.
    pub fn empirical_means(&self) -> PreferenceInstance {
        let upper: Vec<f64> = (0..self.pairs.len()).map(|id| self.mean_by_id(id)).collect();
        PreferenceInstance::from_upper(self.k, &upper).expect("empirical means lie in [0, 1]")
    }
}
