//! Early-warning signs near the pitchfork: the stationary covariance of the
//! linearized equation and its empirical counterparts on simulated paths.
//!
//! For `α < λ₁` the linearization has a Gaussian invariant measure whose
//! covariance pairs against the eigenbasis as
//!
//! ```text
//! ⟨V e_{j1}, e_{j2}⟩ = σ²/(λ_{j1} + λ_{j2} − 2α) · Σ_n q_n ⟨e_{j1}, b_n⟩⟨e_{j2}, b_n⟩
//! ```
//!
//! whose `(1,1)` entry diverges like `1/(λ₁ − α)` as the threshold is
//! approached — the early-warning signal. Pointwise variances follow by a
//! truncated double sum over modes. The empirical estimators are plain
//! time-averaged covariances over post-burn-in snapshots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::TrajectoryRecord;
use crate::noise::BasisCovariance;
use crate::spectral::{dot_dx, Grid, SpectralBasis};
use crate::stats;

/// Default truncation of the analytic double sums.
pub const DEFAULT_MODE_TRUNCATION: usize = 30;

#[derive(Debug, Error)]
pub enum EwsError {
    #[error("α = {alpha} is in the divergence domain: λ_{j1} + λ_{j2} − 2α = {denom} ≤ 0")]
    DivergenceDomain {
        j1: usize,
        j2: usize,
        alpha: f64,
        denom: f64,
    },
    #[error("mode index {k} out of range 1..={m}")]
    ModeOutOfRange { k: usize, m: usize },
    #[error("grid index {p} out of range 1..={n}")]
    PointOutOfRange { p: usize, n: usize },
    #[error("estimator needs at least {need} post-burn-in snapshots, got {got}")]
    TooFewSnapshots { need: usize, got: usize },
    #[error("scaling fit rejected: {0}")]
    Fit(String),
}

/// Entry `⟨V e_{j1}, e_{j2}⟩` of the stationary covariance of the linearized
/// equation; `j1`, `j2` are one-based mode indices and `cov` is the noise
/// covariance expressed in the same basis.
pub fn mode_covariance(
    j1: usize,
    j2: usize,
    basis: &SpectralBasis,
    cov: &BasisCovariance,
    alpha: f64,
    sigma: f64,
) -> Result<f64, EwsError> {
    for j in [j1, j2] {
        if j == 0 || j > basis.m() || j > cov.size() {
            return Err(EwsError::ModeOutOfRange {
                k: j,
                m: basis.m().min(cov.size()),
            });
        }
    }
    let denom = basis.lambda(j1) + basis.lambda(j2) - 2.0 * alpha;
    if denom <= 0.0 {
        return Err(EwsError::DivergenceDomain {
            j1,
            j2,
            alpha,
            denom,
        });
    }
    Ok(sigma * sigma / denom * cov.entry(j1 - 1, j2 - 1))
}

/// Bilinear form `⟨V f₁, f₂⟩` truncated to the first `m_trunc` modes.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_covariance(
    f1: &[f64],
    f2: &[f64],
    basis: &SpectralBasis,
    cov: &BasisCovariance,
    alpha: f64,
    sigma: f64,
    m_trunc: usize,
    grid: &Grid,
) -> Result<f64, EwsError> {
    let m = m_trunc.min(basis.m()).min(cov.size());
    if m == 0 {
        return Err(EwsError::ModeOutOfRange { k: m_trunc, m: 0 });
    }
    let c1: Vec<f64> = (1..=m)
        .map(|j| dot_dx(f1, basis.eigenvector(j), grid.dx()))
        .collect();
    let c2: Vec<f64> = (1..=m)
        .map(|j| dot_dx(f2, basis.eigenvector(j), grid.dx()))
        .collect();
    let mut acc = 0.0;
    for j1 in 1..=m {
        for j2 in 1..=m {
            let denom = basis.lambda(j1) + basis.lambda(j2) - 2.0 * alpha;
            if denom <= 0.0 {
                return Err(EwsError::DivergenceDomain {
                    j1,
                    j2,
                    alpha,
                    denom,
                });
            }
            acc += c1[j2 - 1] * c2[j1 - 1] / denom * cov.entry(j1 - 1, j2 - 1);
        }
    }
    Ok(sigma * sigma * acc)
}

/// Stationary variance of the linearized field at grid point `p` (one-based,
/// `x = p·dx`), truncated to `m_trunc` modes per sum.
pub fn pointwise_variance(
    p: usize,
    basis: &SpectralBasis,
    cov: &BasisCovariance,
    alpha: f64,
    sigma: f64,
    m_trunc: usize,
) -> Result<f64, EwsError> {
    let n = basis.eigenvector(1).len();
    if p == 0 || p > n {
        return Err(EwsError::PointOutOfRange { p, n });
    }
    let m = m_trunc.min(basis.m()).min(cov.size());
    let mut acc = 0.0;
    for j1 in 1..=m {
        let e1p = basis.eigenvector(j1)[p - 1];
        for j2 in 1..=m {
            let denom = basis.lambda(j1) + basis.lambda(j2) - 2.0 * alpha;
            if denom <= 0.0 {
                return Err(EwsError::DivergenceDomain {
                    j1,
                    j2,
                    alpha,
                    denom,
                });
            }
            acc += e1p * basis.eigenvector(j2)[p - 1] / denom * cov.entry(j1 - 1, j2 - 1);
        }
    }
    Ok(sigma * sigma * acc)
}

/// Which empirical estimator produced a [`VarianceEstimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    ModeCovariance { k1: usize, k2: usize },
    PointwiseVariance { p: usize },
}

/// A single-trajectory estimate with a batch-means standard error (zero when
/// the series is too short to batch).
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub kind: EstimatorKind,
}

fn covariance_of(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        acc += x * y;
    }
    acc / n - mx * my
}

fn batch_stderr(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let batches = if n >= 40 { 10 } else { n / 4 };
    if batches < 2 {
        return 0.0;
    }
    let len = n / batches;
    let vals: Vec<f64> = (0..batches)
        .map(|b| covariance_of(&xs[b * len..(b + 1) * len], &ys[b * len..(b + 1) * len]))
        .collect();
    stats::stderr_of_mean(&vals)
}

/// Time-averaged covariance of the projections on modes `k1`, `k2` over the
/// post-burn-in snapshots: `mean(a·b) − mean(a)·mean(b)`.
pub fn empirical_mode_covariance(
    traj: &TrajectoryRecord,
    basis: &SpectralBasis,
    k1: usize,
    k2: usize,
    grid: &Grid,
) -> Result<VarianceEstimate, EwsError> {
    for k in [k1, k2] {
        if k == 0 || k > basis.m() {
            return Err(EwsError::ModeOutOfRange { k, m: basis.m() });
        }
    }
    let window = traj.statistics_window();
    if window.len() < 2 {
        return Err(EwsError::TooFewSnapshots {
            need: 2,
            got: window.len(),
        });
    }
    let xs: Vec<f64> = window
        .iter()
        .map(|(_, u)| dot_dx(u, basis.eigenvector(k1), grid.dx()))
        .collect();
    let ys: Vec<f64> = window
        .iter()
        .map(|(_, u)| dot_dx(u, basis.eigenvector(k2), grid.dx()))
        .collect();
    Ok(VarianceEstimate {
        value: covariance_of(&xs, &ys),
        stderr: batch_stderr(&xs, &ys),
        kind: EstimatorKind::ModeCovariance { k1, k2 },
    })
}

/// Time-averaged variance of the raw field value at grid point `p`
/// (one-based) over the post-burn-in snapshots.
pub fn empirical_pointwise_variance(
    traj: &TrajectoryRecord,
    p: usize,
) -> Result<VarianceEstimate, EwsError> {
    let window = traj.statistics_window();
    if window.len() < 2 {
        return Err(EwsError::TooFewSnapshots {
            need: 2,
            got: window.len(),
        });
    }
    let n = window[0].1.len();
    if p == 0 || p > n {
        return Err(EwsError::PointOutOfRange { p, n });
    }
    let xs: Vec<f64> = window.iter().map(|(_, u)| u[p - 1]).collect();
    Ok(VarianceEstimate {
        value: covariance_of(&xs, &xs),
        stderr: batch_stderr(&xs, &xs),
        kind: EstimatorKind::PointwiseVariance { p },
    })
}

/// Least-squares fit of `log(value)` against `log(λ₁ − α)`; a clean
/// hyperbolic divergence gives slope `−1`.
pub fn scaling_fit(
    alphas: &[f64],
    values: &[f64],
    lambda1: f64,
) -> Result<(f64, f64, f64), EwsError> {
    if alphas.len() != values.len() || alphas.len() < 2 {
        return Err(EwsError::Fit(format!(
            "need matching ladders of at least 2 points, got {} and {}",
            alphas.len(),
            values.len()
        )));
    }
    let mut xs = Vec::with_capacity(alphas.len());
    let mut ys = Vec::with_capacity(values.len());
    for (&a, &v) in alphas.iter().zip(values) {
        if !(a < lambda1) {
            return Err(EwsError::Fit(format!("α = {a} is not below λ₁ = {lambda1}")));
        }
        if !(v > 0.0) {
            return Err(EwsError::Fit(format!("nonpositive value {v} cannot be logged")));
        }
        xs.push((lambda1 - a).ln());
        ys.push(v.ln());
    }
    stats::linear_fit(&xs, &ys).map_err(|e| EwsError::Fit(e.to_string()))
}

/// Grid index (one-based) of the largest `|e₁|`: the most informative
/// measurement location. Ties go to the smallest index.
pub fn argmax_measurement_point(basis: &SpectralBasis) -> usize {
    let e1 = basis.eigenvector(1);
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in e1.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best + 1
}

/// Residual of the stationary Lyapunov identity on the truncated matrices:
/// `max_{i,j≤m} |(2α − λ_i − λ_j)·V(i,j) + σ²·C(i,j)|`. Tiny by construction
/// of [`mode_covariance`]; exposed as a cross-check.
pub fn lyapunov_residual(
    basis: &SpectralBasis,
    cov: &BasisCovariance,
    alpha: f64,
    sigma: f64,
    m_trunc: usize,
) -> Result<f64, EwsError> {
    let m = m_trunc.min(basis.m()).min(cov.size());
    let mut worst = 0.0f64;
    for j1 in 1..=m {
        for j2 in 1..=m {
            let v = mode_covariance(j1, j2, basis, cov, alpha, sigma)?;
            let res = (2.0 * alpha - basis.lambda(j1) - basis.lambda(j2)) * v
                + sigma * sigma * cov.entry(j1 - 1, j2 - 1);
            worst = worst.max(res.abs());
        }
    }
    Ok(worst)
}

/// Mean and standard error over independent per-seed estimates.
#[derive(Clone, Debug)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

pub fn ensemble_estimate(per_seed: Vec<f64>) -> EnsembleEstimate {
    let mean = stats::mean(&per_seed);
    let stderr = stats::stderr_of_mean(&per_seed);
    EnsembleEstimate {
        mean,
        stderr,
        per_seed,
    }
}
