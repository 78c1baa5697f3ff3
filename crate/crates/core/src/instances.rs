//! Problem instances: pairwise preference matrices, Bradley-Terry models,
//! synthetic generators and the instance JSON format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::logistic;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::RngState;

const RECIPROCITY_TOL: f64 = 1e-12;

/// Canonically oriented policy pair, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
}

impl PairIndex {
    /// Orders `(a, b)` canonically. Panics if `a == b`.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a pair needs two distinct policies");
        Self {
            i: a.min(b),
            j: a.max(b),
        }
    }

    /// Position of this pair in the canonical enumeration of `S`.
    pub fn id(self, k: usize) -> usize {
        pair_id(k, self.i, self.j)
    }
}

/// `|S| = K (K - 1) / 2`.
pub fn pair_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Canonical index of `(i, j)` with `i < j`: row-major over the upper triangle.
pub fn pair_id(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// All canonical pairs in order `(0,1), (0,2), ..., (K-2,K-1)`.
pub fn all_pairs(k: usize) -> Vec<PairIndex> {
    let mut out = Vec::with_capacity(pair_count(k));
    for i in 0..k {
        for j in (i + 1)..k {
            out.push(PairIndex { i, j });
        }
    }
    out
}

/// `K x K` matrix of pairwise preference means `mu(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceInstance {
    k: usize,
    mu: Vec<f64>,
}

/// Findings of [`PreferenceInstance::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub out_of_range: Vec<(usize, usize)>,
    pub diagonal_violations: Vec<usize>,
    pub reciprocity_violations: Vec<(usize, usize)>,
    /// Policies `i` with `min_{j != i} mu(i, j) > 1/2`.
    pub undominated: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid_matrix(&self) -> bool {
        self.out_of_range.is_empty()
            && self.diagonal_violations.is_empty()
            && self.reciprocity_violations.is_empty()
    }

    /// The undominated policy, when exactly one exists.
    pub fn unique_best(&self) -> Option<usize> {
        match self.undominated.as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }
}

impl PreferenceInstance {
    /// Builds from the row-major upper triangle (`mu(i, j)` for `i < j`),
    /// mirroring the lower triangle and setting the diagonal to 1/2.
    pub fn from_upper(k: usize, upper: &[f64]) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need K >= 2, got {k}")));
        }
        if upper.len() != pair_count(k) {
            return Err(Error::InvalidArgument(format!(
                "K = {k} needs {} upper-triangle entries, got {}",
                pair_count(k),
                upper.len()
            )));
        }
        if let Some(bad) = upper.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "preference mean {bad} is outside [0, 1]"
            )));
        }
        let mut mu = vec![0.5; k * k];
        for (p, &v) in all_pairs(k).iter().zip(upper) {
            mu[p.i * k + p.j] = v;
            mu[p.j * k + p.i] = 1.0 - v;
        }
        Ok(Self { k, mu })
    }

    /// Builds from a full row-major matrix without enforcing reciprocity;
    /// use [`validate`](Self::validate) to inspect it.
    pub fn from_matrix(k: usize, rows: Vec<f64>) -> Result<Self> {
        if k < 2 || rows.len() != k * k {
            return Err(Error::InvalidArgument(format!(
                "expected a {k}x{k} matrix with K >= 2, got {} entries",
                rows.len()
            )));
        }
        Ok(Self { k, mu: rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.k + j]
    }

    pub fn upper(&self) -> Vec<f64> {
        all_pairs(self.k)
            .into_iter()
            .map(|p| self.mu(p.i, p.j))
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let k = self.k;
        let mut report = ValidationReport::default();
        for i in 0..k {
            for j in 0..k {
                let v = self.mu(i, j);
                if !(0.0..=1.0).contains(&v) {
                    report.out_of_range.push((i, j));
                }
            }
            if (self.mu(i, i) - 0.5).abs() > RECIPROCITY_TOL {
                report.diagonal_violations.push(i);
            }
            for j in (i + 1)..k {
                if (self.mu(i, j) + self.mu(j, i) - 1.0).abs() > RECIPROCITY_TOL {
                    report.reciprocity_violations.push((i, j));
                }
            }
        }
        report.undominated = (0..k)
            .filter(|&i| self.worst_case(i) > 0.5)
            .collect();
        report
    }

    /// `min_{j != i} mu(i, j)`.
    pub fn worst_case(&self, i: usize) -> f64 {
        (0..self.k)
            .filter(|&j| j != i)
            .map(|j| self.mu(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// `argmax_i min_{j != i} mu(i, j)`, lowest index on ties.
    pub fn best_policy(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..self.k {
            let v = self.worst_case(i);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }
}

/// Bradley-Terry model `mu(i, j) = logistic(theta^T (x_i - x_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredModel {
    theta: Vec<f64>,
    features: Vec<Vec<f64>>,
    bound_b: f64,
    bound_l: f64,
}

impl StructuredModel {
    pub fn new(theta: Vec<f64>, features: Vec<Vec<f64>>, bound_b: f64, bound_l: f64) -> Result<Self> {
        let d = theta.len();
        if d == 0 {
            return Err(Error::InvalidArgument("theta must have d >= 1".into()));
        }
        if features.len() < 2 {
            return Err(Error::InvalidArgument("need K >= 2 feature vectors".into()));
        }
        if let Some((i, x)) = features.iter().enumerate().find(|(_, x)| x.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "feature vector {i} has length {}, expected {d}",
                x.len()
            )));
        }
        if norm(&theta) > bound_b * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "||theta|| = {} exceeds B = {bound_b}",
                norm(&theta)
            )));
        }
        let model = Self {
            theta,
            features,
            bound_b,
            bound_l,
        };
        let spread = model.max_pair_distance();
        if spread > bound_l * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "max ||x_i - x_j|| = {spread} exceeds L = {bound_l}"
            )));
        }
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.features.len()
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn bound_b(&self) -> f64 {
        self.bound_b
    }

    pub fn bound_l(&self) -> f64 {
        self.bound_l
    }

    pub fn scores(&self) -> Vec<f64> {
        self.features.iter().map(|x| dot(x, &self.theta)).collect()
    }

    pub fn max_pair_distance(&self) -> f64 {
        max_pair_distance(&self.features)
    }

    /// Lowest-index argmax of the true scores.
    pub fn best_policy(&self) -> usize {
        argmax(&self.scores())
    }

    pub fn to_preferences(&self) -> PreferenceInstance {
        from_bt(self)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn max_pair_distance(features: &[Vec<f64>]) -> f64 {
    let mut out: f64 = 0.0;
    for (a, xa) in features.iter().enumerate() {
        for xb in &features[a + 1..] {
            let d2: f64 = xa.iter().zip(xb).map(|(u, v)| (u - v) * (u - v)).sum();
            out = out.max(d2.sqrt());
        }
    }
    out
}

/// Pairwise means of a Bradley-Terry model; the lower triangle is the mirror
/// of the upper one, so reciprocity holds exactly.
pub fn from_bt(model: &StructuredModel) -> PreferenceInstance {
    let scores = model.scores();
    let upper: Vec<f64> = all_pairs(model.k())
        .into_iter()
        .map(|p| {
            let diff: f64 = model.features[p.i]
                .iter()
                .zip(&model.features[p.j])
                .zip(&model.theta)
                .map(|((a, b), t)| (a - b) * t)
                .sum();
            debug_assert!((diff - (scores[p.i] - scores[p.j])).abs() < 1e-9);
            logistic(diff)
        })
        .collect();
    PreferenceInstance::from_upper(model.k(), &upper).expect("logistic output is a probability")
}

/// Latent-score generator for unstructured instances:
/// `r_i = top - span * i / (K - 1) + eps_i`, `eps_i ~ N(0, noise_sd^2)`,
/// `mu(i, j) = logistic(r_i - r_j)`. Defaults give the 16-policy benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstructuredGenerator {
    pub k: usize,
    pub top: f64,
    pub span: f64,
    pub noise_sd: f64,
}

impl Default for UnstructuredGenerator {
    fn default() -> Self {
        Self {
            k: 16,
            top: 0.55,
            span: 1.90,
            noise_sd: 0.005,
        }
    }
}

impl UnstructuredGenerator {
    /// Noise draws are taken in policy order, one Box-Muller draw each.
    pub fn scores(&self, rng: &mut RngState) -> Vec<f64> {
        let denom = (self.k - 1) as f64;
        (0..self.k)
            .map(|i| self.top - self.span * i as f64 / denom + self.noise_sd * rng.gaussian())
            .collect()
    }

    pub fn generate(&self, rng: &mut RngState) -> Result<PreferenceInstance> {
        if self.k < 2 {
            return Err(Error::InvalidArgument("need K >= 2".into()));
        }
        let r = self.scores(rng);
        let upper: Vec<f64> = all_pairs(self.k)
            .into_iter()
            .map(|p| logistic(r[p.i] - r[p.j]))
            .collect();
        PreferenceInstance::from_upper(self.k, &upper)
    }
}

/// The 16-policy benchmark instance with default parameters.
pub fn gen_unstructured16(rng: &mut RngState) -> PreferenceInstance {
    UnstructuredGenerator::default()
        .generate(rng)
        .expect("default generator is valid")
}

/// Feature generator for Bradley-Terry instances: `theta` standard Gaussian
/// normalised to unit length, base scores `b_i` evenly spaced from
/// `score_hi` to `score_lo`, `x_i = b_i theta + xi_i` with
/// `xi_i ~ N(0, noise_sd^2 I_d)`, then policies sorted by descending true
/// score. Defaults give the 32-policy, `d = 6` benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGenerator {
    pub k: usize,
    pub d: usize,
    pub score_hi: f64,
    pub score_lo: f64,
    pub noise_sd: f64,
}

impl Default for StructuredGenerator {
    fn default() -> Self {
        Self {
            k: 32,
            d: 6,
            score_hi: 0.3,
            score_lo: -0.3,
            noise_sd: 0.25,
        }
    }
}

impl StructuredGenerator {
    /// Draw order: `d` draws for theta, then `d` draws per policy.
    pub fn generate(&self, rng: &mut RngState) -> Result<StructuredModel> {
        if self.k < 2 || self.d == 0 {
            return Err(Error::InvalidArgument("need K >= 2 and d >= 1".into()));
        }
        let mut theta: Vec<f64> = (0..self.d).map(|_| rng.gaussian()).collect();
        let n = norm(&theta);
        theta.iter_mut().for_each(|t| *t /= n);
        let denom = (self.k - 1) as f64;
        let mut features: Vec<Vec<f64>> = (0..self.k)
            .map(|i| {
                let b = self.score_hi + (self.score_lo - self.score_hi) * i as f64 / denom;
                theta
                    .iter()
                    .map(|t| b * t + self.noise_sd * rng.gaussian())
                    .collect()
            })
            .collect();
        // Stable sort: equal scores keep generation order.
        let mut order: Vec<(usize, f64)> = features
            .iter()
            .map(|x| dot(x, &theta))
            .enumerate()
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut sorted = Vec::with_capacity(self.k);
        for (idx, _) in &order {
            sorted.push(std::mem::take(&mut features[*idx]));
        }
        let spread = max_pair_distance(&sorted);
        StructuredModel::new(theta, sorted, 1.0, spread)
    }
}

/// The 32-policy, 6-dimensional benchmark model with default parameters.
pub fn gen_structured32(rng: &mut RngState) -> StructuredModel {
    StructuredGenerator::default()
        .generate(rng)
        .expect("default generator is valid")
}

/// Either kind of ground-truth instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Unstructured(PreferenceInstance),
    Structured(StructuredModel),
}

impl Instance {
    pub fn k(&self) -> usize {
        match self {
            Instance::Unstructured(p) => p.k(),
            Instance::Structured(m) => m.k(),
        }
    }

    pub fn preferences(&self) -> PreferenceInstance {
        match self {
            Instance::Unstructured(p) => p.clone(),
            Instance::Structured(m) => from_bt(m),
        }
    }

    /// Ground-truth best policy.
    pub fn best_policy(&self) -> usize {
        match self {
            Instance::Unstructured(p) => p.best_policy(),
            Instance::Structured(m) => m.best_policy(),
        }
    }

    pub fn to_file(&self) -> InstanceFile {
        match self {
            Instance::Unstructured(p) => InstanceFile::Unstructured {
                k: p.k(),
                mu: p.upper(),
            },
            Instance::Structured(m) => InstanceFile::Structured {
                k: m.k(),
                theta: m.theta.clone(),
                x: m.features.clone(),
                b: m.bound_b,
                l: m.bound_l,
            },
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        match file {
            InstanceFile::Unstructured { k, mu } => {
                Ok(Instance::Unstructured(PreferenceInstance::from_upper(k, &mu)?))
            }
            InstanceFile::Structured { k, theta, x, b, l } => {
                if x.len() != k {
                    return Err(Error::InvalidArgument(format!(
                        "K = {k} but X has {} rows",
                        x.len()
                    )));
                }
                Ok(Instance::Structured(StructuredModel::new(theta, x, b, l)?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::json("<string>", e))?;
        Self::from_file(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(file)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk instance schema. Unstructured instances store only the row-major
/// upper triangle; reciprocity is reconstructed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceFile {
    Unstructured {
        #[serde(rename = "K")]
        k: usize,
        mu: Vec<f64>,
    },
    Structured {
        #[serde(rename = "K")]
        k: usize,
        theta: Vec<f64>,
        #[serde(rename = "X")]
        x: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: f64,
        #[serde(rename = "L")]
        l: f64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_policy() -> PreferenceInstance {
        PreferenceInstance::from_upper(3, &[0.8, 0.7, 0.6]).unwrap()
    }

    #[test]
    fn pair_ids_are_canonical_positions() {
        for k in 2..8 {
            for (pos, p) in all_pairs(k).iter().enumerate() {
                assert_eq!(p.id(k), pos);
            }
            assert_eq!(all_pairs(k).len(), pair_count(k));
        }
        assert_eq!(PairIndex::new(3, 1), PairIndex { i: 1, j: 3 });
    }

    #[test]
    fn validate_two_policies() {
        let inst = PreferenceInstance::from_upper(2, &[0.8]).unwrap();
        let report = inst.validate();
        assert!(report.is_valid_matrix());
        assert_eq!(report.unique_best(), Some(0));
    }

    #[test]
    fn validate_cycle_has_no_undominated_policy() {
        // mu(0,1) = 0.6, mu(1,2) = 0.6, mu(2,0) = 0.6  =>  mu(0,2) = 0.4
        let inst = PreferenceInstance::from_upper(3, &[0.6, 0.4, 0.6]).unwrap();
        let report = inst.validate();
        assert!(report.is_valid_matrix());
        // Exhaustive check: every policy loses one duel.
        for i in 0..3 {
            assert!(inst.worst_case(i) < 0.5);
        }
        assert!(report.undominated.is_empty());
        assert_eq!(report.unique_best(), None);
    }

    #[test]
    fn validate_flags_diagonal_and_reciprocity() {
        let rows = vec![0.4, 0.8, 0.3, 0.5];
        let report = PreferenceInstance::from_matrix(2, rows).unwrap().validate();
        assert_eq!(report.diagonal_violations, vec![0]);
        assert_eq!(report.reciprocity_violations, vec![(0, 1)]);
        assert!(!report.is_valid_matrix());
    }

    #[test]
    fn best_policy_examples() {
        let two = PreferenceInstance::from_upper(2, &[0.8]).unwrap();
        assert_eq!(two.best_policy(), 0);
        let flat = PreferenceInstance::from_upper(4, &[0.5; 6]).unwrap();
        assert_eq!(flat.best_policy(), 0);
        assert_eq!(three_policy().best_policy(), 0);
        let flipped = PreferenceInstance::from_upper(2, &[0.3]).unwrap();
        assert_eq!(flipped.best_policy(), 1);
    }

    #[test]
    fn noiseless_sixteen_policy_instance() {
        let gen = UnstructuredGenerator {
            noise_sd: 0.0,
            ..Default::default()
        };
        let inst = gen.generate(&mut RngState::from_seed(0)).unwrap();
        assert_relative_eq!(inst.mu(0, 1), 0.531_624_394_981_768_6, max_relative = 1e-14);
        // Exhaustive min-max scan.
        let mins: Vec<f64> = (0..16).map(|i| inst.worst_case(i)).collect();
        assert!(mins[0] > 0.5);
        assert!(mins[1..].iter().all(|&m| m < 0.5));
        assert_eq!(inst.best_policy(), 0);
    }

    #[test]
    fn sixteen_policy_generator_is_reproducible() {
        let a = gen_unstructured16(&mut RngState::from_seed(11));
        let b = gen_unstructured16(&mut RngState::from_seed(11));
        assert_eq!(a, b);
        assert!(a.validate().is_valid_matrix());
    }

    #[test]
    fn from_bt_examples() {
        let m = StructuredModel::new(vec![1.0], vec![vec![1.0], vec![0.0], vec![1.0]], 1.0, 1.0).unwrap();
        let p = from_bt(&m);
        assert_relative_eq!(p.mu(0, 1), 0.731_058_578_630_004_9, max_relative = 1e-15);
        assert_eq!(p.mu(0, 2), 0.5);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p.mu(i, j) + p.mu(j, i), 1.0);
            }
        }
    }

    #[test]
    fn structured_generator_sorted_and_reproducible() {
        let m = gen_structured32(&mut RngState::from_seed(5));
        assert_eq!((m.k(), m.d()), (32, 6));
        assert_relative_eq!(norm(m.theta()), 1.0, epsilon = 1e-12);
        let s = m.scores();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(m.best_policy(), 0);
        assert_eq!(m, gen_structured32(&mut RngState::from_seed(5)));
        assert_eq!(m.bound_b(), 1.0);
        assert_relative_eq!(m.bound_l(), m.max_pair_distance());
    }

    #[test]
    fn noiseless_structured_scores_are_base_scores() {
        let gen = StructuredGenerator {
            noise_sd: 0.0,
            ..Default::default()
        };
        let m = gen.generate(&mut RngState::from_seed(3)).unwrap();
        for (i, s) in m.scores().iter().enumerate() {
            let b = 0.3 - 0.6 * i as f64 / 31.0;
            assert_relative_eq!(*s, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn structured_model_rejects_bad_bounds() {
        assert!(StructuredModel::new(vec![2.0], vec![vec![0.0], vec![1.0]], 1.0, 1.0).is_err());
        assert!(StructuredModel::new(vec![1.0], vec![vec![0.0], vec![3.0]], 1.0, 1.0).is_err());
        assert!(StructuredModel::new(vec![1.0], vec![vec![0.0, 1.0], vec![3.0]], 1.0, 5.0).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let u = Instance::Unstructured(gen_unstructured16(&mut RngState::from_seed(1)));
        assert_eq!(Instance::from_json(&u.to_json()).unwrap(), u);
        let s = Instance::Structured(gen_structured32(&mut RngState::from_seed(1)));
        assert_eq!(Instance::from_json(&s.to_json()).unwrap(), s);
        let text = r#"{"kind":"unstructured","K":2,"mu":[0.8]}"#;
        let parsed = Instance::from_json(text).unwrap();
        assert_eq!(parsed.preferences().mu(1, 0), 1.0 - 0.8);
    }
}
