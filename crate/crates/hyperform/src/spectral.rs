//! Spectral gaps and relaxation times of reversible chains, plus the
//! translation of a Dirichlet-form comparison constant into a relaxation-time
//! bound.
//!
//! A reversible kernel is symmetrized by the similarity transform
//! `S = D^{1/2} P D^{-1/2}` with `D = diag(pi)`; states with stationary mass
//! below [`MASS_FLOOR`] are excluded from the transform and treated as
//! isolated. Chains below [`DENSE_LIMIT`] states get a full Jacobi
//! eigensolve; larger ones use shifted power iteration with deflation of the
//! known top eigenvector `sqrt(pi)`.

use crate::chain::{
    dirichlet_form, validate_chain, variance, ChainError, FiniteChain, ScalarField, Tolerances,
};
use thiserror::Error;

/// States with stationary mass below this are excluded from the similarity
/// transform.
pub const MASS_FLOOR: f64 = 1e-14;
/// Dense eigensolve below this state count, iterative above.
pub const DENSE_LIMIT: usize = 2000;
/// Iterative solver tolerance and iteration cap.
pub const ITER_TOL: f64 = 1e-8;
pub const ITER_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("chain is not reversible (detailed-balance residual {residual:.3e})")]
    NotReversible { residual: f64 },
    #[error("chain failed validation: {report}")]
    InvalidChain { report: String },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(
        "power iteration did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NoConvergence { residual: f64, iterations: usize },
    #[error("chains have different state counts: {left} vs {right}")]
    StateSetMismatch { left: usize, right: usize },
    #[error("chain has no second eigenvalue (fewer than two states with mass)")]
    TooSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    Iterative,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::Dense => write!(f, "dense"),
            SolveMethod::Iterative => write!(f, "iterative"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralResult {
    pub gap: f64,
    pub relaxation_time: f64,
    pub second_eigenvalue: f64,
    pub method: SolveMethod,
    pub residual: f64,
}

fn check_reversible(chain: &FiniteChain) -> Result<(), SpectralError> {
    let report = validate_chain(chain, Tolerances::default());
    let hard = report
        .violations
        .iter()
        .any(|v| !matches!(v.kind, crate::chain::ViolationKind::DetailedBalance));
    if hard {
        return Err(SpectralError::InvalidChain {
            report: report.to_string(),
        });
    }
    let residual = chain.detailed_balance_residual();
    if residual > crate::chain::STAT_TOL {
        return Err(SpectralError::NotReversible { residual });
    }
    Ok(())
}

/// Indices kept in the symmetrized operator and the dense matrix itself.
fn symmetrize(chain: &FiniteChain) -> (Vec<usize>, Vec<Vec<f64>>) {
    let pi = chain.stationary();
    let kept: Vec<usize> = (0..chain.n_states())
        .filter(|&i| pi[i] > MASS_FLOOR)
        .collect();
    let pos: Vec<Option<usize>> = {
        let mut v = vec![None; chain.n_states()];
        for (slot, &i) in kept.iter().enumerate() {
            v[i] = Some(slot);
        }
        v
    };
    let m = kept.len();
    let mut s = vec![vec![0.0; m]; m];
    for (a, &i) in kept.iter().enumerate() {
        let si = pi[i].sqrt();
        for &(j, p) in chain.row(i) {
            if let Some(b) = pos[j] {
                s[a][b] = si * p / pi[j].sqrt();
            }
        }
    }
    // enforce exact symmetry against roundoff in the similarity transform
    for a in 0..m {
        for b in (a + 1)..m {
            let avg = 0.5 * (s[a][b] + s[b][a]);
            s[a][b] = avg;
            s[b][a] = avg;
        }
    }
    (kept, s)
}

/// Cyclic Jacobi eigensolve of a symmetric matrix. Returns eigenvalues in
/// descending order with their orthonormal eigenvectors as rows.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i][j] * a[i][j];
            }
        }
        s
    };
    for _sweep in 0..100 {
        if off(&a) < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[p][k];
                    let vkq = v[q][k];
                    v[p][k] = c * vkp - s * vkq;
                    v[q][k] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigvecs: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
    (eigvals, eigvecs)
}

fn mat_vec(s: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    s.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn residual_norm(s: &[Vec<f64>], v: &[f64], lambda: f64) -> f64 {
    mat_vec(s, v)
        .iter()
        .zip(v)
        .map(|(sv, vi)| {
            let r = sv - lambda * vi;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Second eigenvalue via power iteration on `(S + I)/2` with the top
/// eigenvector `sqrt(pi)` deflated. The shift maps the spectrum into [0, 1]
/// so the dominant eigenvalue of the deflated operator is `(1 + lambda_2)/2`.
fn power_second(
    s: &[Vec<f64>],
    pi_sqrt: &[f64],
) -> Result<(f64, Vec<f64>, f64, usize), SpectralError> {
    let m = s.len();
    if m < 2 {
        return Err(SpectralError::TooSmall);
    }
    let norm_top: f64 = pi_sqrt.iter().map(|x| x * x).sum::<f64>().sqrt();
    let top: Vec<f64> = pi_sqrt.iter().map(|x| x / norm_top).collect();
    let project = |x: &mut Vec<f64>| {
        let dot: f64 = x.iter().zip(&top).map(|(a, b)| a * b).sum();
        for (xi, ti) in x.iter_mut().zip(&top) {
            *xi -= dot * ti;
        }
    };
    // deterministic start: alternating signs, orthogonalized against sqrt(pi)
    let mut v: Vec<f64> = (0..m)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    project(&mut v);
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return Err(SpectralError::TooSmall);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut lambda = 0.0;
    for it in 0..ITER_CAP {
        let mut w = mat_vec(s, &v);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = 0.5 * (*wi + *vi);
        }
        project(&mut w);
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            // deflated space is annihilated: all remaining eigenvalues are -1
            return Ok((-1.0, v, 0.0, it));
        }
        for x in w.iter_mut() {
            *x /= norm;
        }
        let shifted = {
            let sw = mat_vec(s, &w);
            let ray: f64 = w.iter().zip(&sw).map(|(a, b)| a * b).sum();
            ray
        };
        lambda = shifted;
        v = w;
        let res = residual_norm(s, &v, lambda);
        if res <= ITER_TOL {
            return Ok((lambda, v, res, it + 1));
        }
    }
    let res = residual_norm(s, &v, lambda);
    Err(SpectralError::NoConvergence {
        residual: res,
        iterations: ITER_CAP,
    })
}

/// Spectral gap `1 - lambda_2` of the symmetrized kernel, solver chosen by
/// state count.
pub fn spectral_gap(chain: &FiniteChain) -> Result<SpectralResult, SpectralError> {
    let method = if chain.n_states() < DENSE_LIMIT {
        SolveMethod::Dense
    } else {
        SolveMethod::Iterative
    };
    spectral_gap_with(chain, method)
}

pub fn spectral_gap_with(
    chain: &FiniteChain,
    method: SolveMethod,
) -> Result<SpectralResult, SpectralError> {
    check_reversible(chain)?;
    let (kept, s) = symmetrize(chain);
    if kept.len() < 2 {
        return Err(SpectralError::TooSmall);
    }
    let (second, residual) = match method {
        SolveMethod::Dense => {
            let (vals, vecs) = jacobi_eigen(s.clone());
            let second = vals[1];
            let res = residual_norm(&s, &vecs[1], second);
            (second, res)
        }
        SolveMethod::Iterative => {
            let pi = chain.stationary();
            let pi_sqrt: Vec<f64> = kept.iter().map(|&i| pi[i].sqrt()).collect();
            let (lam, v, res, _iters) = power_second(&s, &pi_sqrt)?;
            let res = residual_norm(&s, &v, lam).max(res);
            if res > ITER_TOL * 10.0 {
                return Err(SpectralError::NoConvergence {
                    residual: res,
                    iterations: ITER_CAP,
                });
            }
            (lam, res)
        }
    };
    let gap = 1.0 - second;
    Ok(SpectralResult {
        gap,
        relaxation_time: if gap > 0.0 { 1.0 / gap } else { f64::INFINITY },
        second_eigenvalue: second,
        method,
        residual,
    })
}

/// Dirichlet form over variance; bounded below by the spectral gap.
pub fn rayleigh_quotient(chain: &FiniteChain, field: &ScalarField) -> Result<f64, SpectralError> {
    let var = variance(chain, field)?;
    if var <= 0.0 {
        return Err(SpectralError::Chain(ChainError::ConstantField));
    }
    Ok(dirichlet_form(chain, field)? / var)
}

/// Relaxation-time bound from a Dirichlet comparison constant.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonBound {
    /// Stationary mismatch correction max_i(pi~_i/pi_i) * max_i(pi_i/pi~_i);
    /// exactly 1 when the two vectors are bit-equal. This correction is a
    /// crude standard device, not part of the comparison constant itself.
    pub c_pi: f64,
    /// Upper bound on the base chain's relaxation time: B * c_pi * t_rel(target).
    pub t_rel_bound: f64,
    /// Matching lower bound on the base chain's gap.
    pub gap_lower_bound: f64,
    /// The target chain's measured relaxation time.
    pub target_relaxation: f64,
}

/// Translate `E_target(f,f) <= B * E_base(f,f)` into
/// `t_rel(base) <= B * c_pi * t_rel(target)`.
pub fn comparison_bound(
    b: f64,
    base: &FiniteChain,
    target: &FiniteChain,
) -> Result<ComparisonBound, SpectralError> {
    if base.n_states() != target.n_states() {
        return Err(SpectralError::StateSetMismatch {
            left: base.n_states(),
            right: target.n_states(),
        });
    }
    let bit_equal = base
        .stationary()
        .iter()
        .zip(target.stationary())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let c_pi = if bit_equal {
        1.0
    } else {
        let mut up: f64 = 0.0;
        let mut down: f64 = 0.0;
        for (&p, &q) in base.stationary().iter().zip(target.stationary()) {
            if p > MASS_FLOOR && q > MASS_FLOOR {
                up = up.max(q / p);
                down = down.max(p / q);
            }
        }
        up * down
    };
    let target_spec = spectral_gap(target)?;
    let t_rel_bound = b * c_pi * target_spec.relaxation_time;
    Ok(ComparisonBound {
        c_pi,
        t_rel_bound,
        gap_lower_bound: target_spec.gap / (b * c_pi),
        target_relaxation: target_spec.relaxation_time,
    })
}
