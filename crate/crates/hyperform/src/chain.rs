//! Finite reversible Markov chains: validation, edge flows, Dirichlet forms,
//! variance, and total-variation distance.
//!
//! Kernels are stored as sparse rows with explicit zero suppression; the
//! Dirichlet sum only visits stored entries. Structural defects (bad
//! dimensions, out-of-range indices) are hard errors at construction time,
//! while numeric defects (row sums, stationarity residuals) are collected
//! into a [`ValidationReport`] and never panic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for structural sums (row sums, distribution normalization).
pub const STRUCT_TOL: f64 = 1e-12;
/// Tolerance for statistical identities (stationarity, detailed balance).
pub const STAT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain must have at least one state")]
    Empty,
    #[error("state index {index} out of range for {n_states} states")]
    IndexOutOfRange { index: usize, n_states: usize },
    #[error("duplicate kernel entry at ({i}, {j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("kernel entry ({i}, {j}) = {p} is not finite")]
    NonFiniteEntry { i: usize, j: usize, p: f64 },
    #[error("vector length {got} does not match state count {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("row {row} of the kernel sums to {sum}, cannot normalize")]
    UnnormalizableRow { row: usize, sum: f64 },
    #[error("distributions have different lengths: {left} vs {right}")]
    DistributionMismatch { left: usize, right: usize },
    #[error("field is constant; variance is zero")]
    ConstantField,
}

/// Per-state annotation carried by discretized chains: which component and
/// cell the state came from, and the cell's anchor point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    pub component: usize,
    pub index: Vec<usize>,
    pub anchor: Vec<f64>,
}

/// Row-stochastic sparse kernel with a stationary distribution attached.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    rows: Vec<Vec<(usize, f64)>>,
    stationary: Vec<f64>,
    initial: Option<Vec<f64>>,
    labels: Option<Vec<StateLabel>>,
    reversible: bool,
}

impl FiniteChain {
    /// Build a chain from `(i, j, p)` triplets. Zero entries are suppressed;
    /// duplicate coordinates are rejected. No numeric invariants are checked
    /// here; run [`validate_chain`] for that.
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        stationary: Vec<f64>,
    ) -> Result<Self, ChainError> {
        if n == 0 {
            return Err(ChainError::Empty);
        }
        if stationary.len() != n {
            return Err(ChainError::DimensionMismatch {
                got: stationary.len(),
                expected: n,
            });
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, p) in triplets {
            if i >= n {
                return Err(ChainError::IndexOutOfRange {
                    index: i,
                    n_states: n,
                });
            }
            if j >= n {
                return Err(ChainError::IndexOutOfRange {
                    index: j,
                    n_states: n,
                });
            }
            if !p.is_finite() {
                return Err(ChainError::NonFiniteEntry { i, j, p });
            }
            if p != 0.0 {
                rows[i].push((j, p));
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                let j = row
                    .windows(2)
                    .find(|w| w[0].0 == w[1].0)
                    .map(|w| w[0].0)
                    .unwrap_or(0);
                return Err(ChainError::DuplicateEntry { i, j });
            }
        }
        Ok(Self {
            rows,
            stationary,
            initial: None,
            labels: None,
            reversible: false,
        })
    }

    /// Build from dense rows, suppressing zeros.
    pub fn from_dense(rows: &[Vec<f64>], stationary: Vec<f64>) -> Result<Self, ChainError> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ChainError::DimensionMismatch {
                    got: row.len(),
                    expected: n,
                });
            }
            for (j, &p) in row.iter().enumerate() {
                triplets.push((i, j, p));
            }
        }
        Self::from_triplets(n, &triplets, stationary)
    }

    /// Explicitly renormalize every row to sum to one. Silent normalization
    /// is forbidden elsewhere; callers must opt in here.
    pub fn normalize_rows(&mut self) -> Result<(), ChainError> {
        for (i, row) in self.rows.iter_mut().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if sum <= 0.0 || sum.is_nan() || !sum.is_finite() {
                return Err(ChainError::UnnormalizableRow { row: i, sum });
            }
            for entry in row.iter_mut() {
                entry.1 /= sum;
            }
        }
        Ok(())
    }

    pub fn with_reversible_flag(mut self, flag: bool) -> Self {
        self.reversible = flag;
        self
    }

    pub fn with_initial(mut self, v: Vec<f64>) -> Result<Self, ChainError> {
        if v.len() != self.n_states() {
            return Err(ChainError::DimensionMismatch {
                got: v.len(),
                expected: self.n_states(),
            });
        }
        self.initial = Some(v);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<StateLabel>) -> Result<Self, ChainError> {
        if labels.len() != self.n_states() {
            return Err(ChainError::DimensionMismatch {
                got: labels.len(),
                expected: self.n_states(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn initial(&self) -> Option<&[f64]> {
        self.initial.as_deref()
    }

    pub fn labels(&self) -> Option<&[StateLabel]> {
        self.labels.as_deref()
    }

    pub fn is_flagged_reversible(&self) -> bool {
        self.reversible
    }

    /// Sparse row `i` as `(column, probability)` pairs sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Kernel entry, zero when unstored.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    /// All stored `(i, j, p)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, p)| (i, j, p)))
    }

    /// Exact detailed-balance residual max_{ij} |pi_i P_ij - pi_j P_ji|.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, j, p) in self.triplets() {
            let fwd = self.stationary[i] * p;
            let bwd = self.stationary[j] * self.prob(j, i);
            worst = worst.max((fwd - bwd).abs());
        }
        worst
    }

    /// Stationarity residual max_j |(pi^T P)_j - pi_j|.
    pub fn stationarity_residual(&self) -> f64 {
        let n = self.n_states();
        let mut image = vec![0.0; n];
        for (i, j, p) in self.triplets() {
            image[j] += self.stationary[i] * p;
        }
        image
            .iter()
            .zip(&self.stationary)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Real-valued function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Which invariant a validation finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    NegativeEntry,
    NonFiniteEntry,
    RowSum,
    StationaryEntry,
    StationaryNorm,
    Stationarity,
    DetailedBalance,
    InitialDistribution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub max_residual: f64,
    pub detail: String,
}

/// Outcome of [`validate_chain`]: empty iff all invariants hold within
/// tolerance. Numeric violations are reported, never thrown.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(
                f,
                "{:?}: residual {:.3e} ({})",
                v.kind, v.max_residual, v.detail
            )?;
        }
        Ok(())
    }
}

/// Validation tolerances; structural checks default to 1e-12, statistical
/// checks (stationarity of a supplied pi, detailed balance) to 1e-10.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub structural: f64,
    pub statistical: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural: STRUCT_TOL,
            statistical: STAT_TOL,
        }
    }
}

/// Check every chain invariant and report violations with max residuals.
pub fn validate_chain(chain: &FiniteChain, tol: Tolerances) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = chain.n_states();

    let mut worst_negative = 0.0_f64;
    let mut nonfinite = None;
    for (i, j, p) in chain.triplets() {
        if !p.is_finite() {
            nonfinite = Some((i, j, p));
        } else if p < 0.0 {
            worst_negative = worst_negative.max(-p);
        }
    }
    if let Some((i, j, p)) = nonfinite {
        report.violations.push(Violation {
            kind: ViolationKind::NonFiniteEntry,
            max_residual: f64::INFINITY,
            detail: format!("entry ({i}, {j}) = {p}"),
        });
    }
    if worst_negative > 0.0 {
        report.violations.push(Violation {
            kind: ViolationKind::NegativeEntry,
            max_residual: worst_negative,
            detail: "kernel entries must be nonnegative".into(),
        });
    }

    let mut worst_row = 0.0_f64;
    let mut worst_row_idx = 0;
    for i in 0..n {
        let sum: f64 = chain.row(i).iter().map(|&(_, p)| p).sum();
        let res = (sum - 1.0).abs();
        if res > worst_row {
            worst_row = res;
            worst_row_idx = i;
        }
    }
    if worst_row > tol.structural {
        report.violations.push(Violation {
            kind: ViolationKind::RowSum,
            max_residual: worst_row,
            detail: format!("worst row {worst_row_idx}"),
        });
    }

    let pi = chain.stationary();
    let neg_pi = pi.iter().cloned().fold(0.0_f64, |acc, x| acc.max(-x));
    if neg_pi > 0.0 {
        report.violations.push(Violation {
            kind: ViolationKind::StationaryEntry,
            max_residual: neg_pi,
            detail: "stationary entries must be nonnegative".into(),
        });
    }
    let norm_res = (pi.iter().sum::<f64>() - 1.0).abs();
    if norm_res > tol.structural {
        report.violations.push(Violation {
            kind: ViolationKind::StationaryNorm,
            max_residual: norm_res,
            detail: "stationary vector does not sum to 1".into(),
        });
    }

    let stat_res = chain.stationarity_residual();
    if stat_res > tol.statistical {
        report.violations.push(Violation {
            kind: ViolationKind::Stationarity,
            max_residual: stat_res,
            detail: "pi^T P != pi^T".into(),
        });
    }

    if chain.is_flagged_reversible() {
        let db = chain.detailed_balance_residual();
        if db > tol.statistical {
            report.violations.push(Violation {
                kind: ViolationKind::DetailedBalance,
                max_residual: db,
                detail: "pi_i P_ij != pi_j P_ji".into(),
            });
        }
    }

    if let Some(v) = chain.initial() {
        let neg = v.iter().cloned().fold(0.0_f64, |acc, x| acc.max(-x));
        let norm = (v.iter().sum::<f64>() - 1.0).abs();
        let res = neg.max(norm);
        if res > tol.structural {
            report.violations.push(Violation {
                kind: ViolationKind::InitialDistribution,
                max_residual: res,
                detail: "initial vector is not a distribution".into(),
            });
        }
    }

    report
}

/// Dirichlet form (1/2) sum_ij (f_i - f_j)^2 P_ij pi_i. Nonnegative, zero on
/// constants; only stored kernel entries are visited.
pub fn dirichlet_form(chain: &FiniteChain, field: &ScalarField) -> Result<f64, ChainError> {
    let n = chain.n_states();
    if field.len() != n {
        return Err(ChainError::DimensionMismatch {
            got: field.len(),
            expected: n,
        });
    }
    let f = field.values();
    let pi = chain.stationary();
    let mut acc = 0.0;
    for i in 0..n {
        let pii = pi[i];
        if pii == 0.0 {
            continue;
        }
        for &(j, p) in chain.row(i) {
            let d = f[i] - f[j];
            acc += d * d * p * pii;
        }
    }
    Ok(0.5 * acc)
}

/// Same quantity summed over unordered pairs with flows Q(i,j) = pi_i P_ij.
/// For reversible chains this equals [`dirichlet_form`]; used as an
/// independent algebraic route in tests.
pub fn dirichlet_form_unordered(
    chain: &FiniteChain,
    field: &ScalarField,
) -> Result<f64, ChainError> {
    let n = chain.n_states();
    if field.len() != n {
        return Err(ChainError::DimensionMismatch {
            got: field.len(),
            expected: n,
        });
    }
    let f = field.values();
    let pi = chain.stationary();
    let mut acc = 0.0;
    for (i, j, p) in chain.triplets() {
        if i < j {
            let d = f[i] - f[j];
            acc += d * d * pi[i] * p;
        }
    }
    Ok(acc)
}

/// Edge flow Q(i, j) = pi_i P_ij.
pub fn edge_flow(chain: &FiniteChain, i: usize, j: usize) -> Result<f64, ChainError> {
    let n = chain.n_states();
    if i >= n {
        return Err(ChainError::IndexOutOfRange {
            index: i,
            n_states: n,
        });
    }
    if j >= n {
        return Err(ChainError::IndexOutOfRange {
            index: j,
            n_states: n,
        });
    }
    Ok(chain.stationary()[i] * chain.prob(i, j))
}

/// Total variation distance: half the L1 distance, equivalently the largest
/// discrepancy |p(A) - q(A)| over events A.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64, ChainError> {
    if p.len() != q.len() {
        return Err(ChainError::DistributionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Var_pi(f) = E_pi[f^2] - (E_pi[f])^2.
pub fn variance(chain: &FiniteChain, field: &ScalarField) -> Result<f64, ChainError> {
    let n = chain.n_states();
    if field.len() != n {
        return Err(ChainError::DimensionMismatch {
            got: field.len(),
            expected: n,
        });
    }
    let f = field.values();
    let pi = chain.stationary();
    let mean: f64 = pi.iter().zip(f).map(|(w, x)| w * x).sum();
    let second: f64 = pi.iter().zip(f).map(|(w, x)| w * x * x).sum();
    Ok((second - mean * mean).max(0.0))
}
