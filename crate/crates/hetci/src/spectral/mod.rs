//! Discretization of the interval and of the Schrödinger operator `A = Δ − g`,
//! together with its eigenpairs and the discrete inner product used by every
//! other module.
//!
//! The interval `[0, L]` is sampled at `N` interior points `x_n = n·dx`,
//! `dx = L/(N+1)`; Dirichlet boundary values are implicit zeros. The Laplacian
//! becomes the symmetric tridiagonal matrix with `−2/dx²` on the diagonal and
//! `1/dx²` off it, and `A` subtracts the sampled potential from the diagonal.
//! Eigenpairs of `−A` are computed by Sturm bisection plus inverse iteration
//! and returned orthonormal in the discrete inner product
//! `⟨v, w⟩_dx = dx · Σ v_n w_n`.

mod eigen;
mod grid;
mod tridiagonal;

pub use eigen::{
    discrete_laplacian_eigenvalue, eigendecompose, sine_mode, SpectralBasis,
};
pub use grid::{Grid, Potential, PotentialKind};
pub use tridiagonal::{PivotedTridiagonalLu, TridiagonalOperator};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("potential sample {index} is not a nonnegative finite number: {value}")]
    InvalidPotential { index: usize, value: f64 },
    #[error("requested {m} modes from a grid with {n} interior points")]
    Truncation { m: usize, n: usize },
    #[error("eigensolver failed to converge for eigenvalue index {index}")]
    Convergence { index: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("mode index {k} out of range 1..={m}")]
    ModeOutOfRange { k: usize, m: usize },
    #[error("potential descriptor `{0}` not understood")]
    BadDescriptor(String),
    #[error("could not read potential file: {0}")]
    Io(String),
}

/// Builds the Dirichlet difference Laplacian on `grid`: diagonal entries
/// `−2/dx²`, off-diagonal entries `1/dx²`.
pub fn build_laplacian(grid: &Grid) -> Result<TridiagonalOperator, SpectralError> {
    let n = grid.n();
    if n < 2 {
        return Err(SpectralError::InvalidGrid(format!(
            "need at least 2 interior points, got {n}"
        )));
    }
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    TridiagonalOperator::new(vec![-2.0 * inv_dx2; n], vec![inv_dx2; n - 1])
}

/// Builds `A_α = Δ − g + α I` on `grid`: the Laplacian diagonal shifted by
/// `−g(x_n) + α` pointwise. Pass `alpha = 0` for the bare operator `A`.
pub fn build_schrodinger(
    grid: &Grid,
    g: &Potential,
    alpha: f64,
) -> Result<TridiagonalOperator, SpectralError> {
    let lap = build_laplacian(grid)?;
    if g.samples().len() != grid.n() {
        return Err(SpectralError::DimensionMismatch {
            expected: grid.n(),
            got: g.samples().len(),
        });
    }
    let diag = lap
        .diag()
        .iter()
        .zip(g.samples())
        .map(|(d, gn)| d - gn + alpha)
        .collect();
    TridiagonalOperator::new(diag, lap.off().to_vec())
}

/// Discrete inner product `⟨v, w⟩_dx = dx · Σ_{n=1..N} v_n w_n`.
pub fn inner_dx(v: &[f64], w: &[f64], grid: &Grid) -> Result<f64, SpectralError> {
    if v.len() != w.len() {
        return Err(SpectralError::DimensionMismatch {
            expected: v.len(),
            got: w.len(),
        });
    }
    Ok(dot_dx(v, w, grid.dx()))
}

/// Discrete norm `‖v‖_dx = sqrt(⟨v, v⟩_dx)`.
pub fn norm_dx(v: &[f64], grid: &Grid) -> f64 {
    dot_dx(v, v, grid.dx()).sqrt()
}

#[inline]
pub(crate) fn dot_dx(v: &[f64], w: &[f64], dx: f64) -> f64 {
    let mut acc = 0.0;
    for (a, b) in v.iter().zip(w) {
        acc += a * b;
    }
    dx * acc
}

/// Counts strict sign alternations between consecutive nonzero entries.
///
/// For eigenvectors of `−A` this equals `k − 1` for the `k`-th mode, the
/// discrete analogue of the interior-root count of Sturm–Liouville theory.
pub fn count_sign_changes(v: &[f64]) -> Result<usize, SpectralError> {
    let mut changes = 0usize;
    let mut last = 0.0f64;
    for &x in v {
        if x == 0.0 {
            continue;
        }
        if last != 0.0 && x.signum() != last.signum() {
            changes += 1;
        }
        last = x;
    }
    if last == 0.0 {
        return Err(SpectralError::DegenerateInput(
            "all-zero vector has no sign pattern".into(),
        ));
    }
    Ok(changes)
}

/// Diagnostic gap `λ_k − μ_k − mean(g)` between the computed spectrum and the
/// shifted Laplacian reference.
///
/// The reference is the discrete Laplacian eigenvalue `μ_k` rather than the
/// continuum `(πk/L)²`, so the diagnostic isolates what the potential does to
/// mode `k` from plain mesh error (which grows with `k` and would dominate the
/// tail otherwise). `mean(g)` is the trapezoid average
/// `(dx/L)(Σ g(x_n) + (g(x_1)+g(x_N))/2)`, exact for constant potentials, for
/// which the gap vanishes identically. For Hölder potentials the gap decays
/// like `O(1/k)`; it is reported for inspection only.
pub fn asymptotic_gap(
    basis: &SpectralBasis,
    g: &Potential,
    grid: &Grid,
    k: usize,
) -> Result<f64, SpectralError> {
    if k == 0 || k > basis.m() {
        return Err(SpectralError::ModeOutOfRange { k, m: basis.m() });
    }
    Ok(basis.lambda(k) - discrete_laplacian_eigenvalue(grid, k) - g.mean_dx(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_entries_unit_spacing() {
        // L=4, N=3 gives dx=1.
        let grid = Grid::new(4.0, 3).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        assert_eq!(lap.diag(), &[-2.0, -2.0, -2.0]);
        assert_eq!(lap.off(), &[1.0, 1.0]);
    }

    #[test]
    fn laplacian_entries_paper_grid() {
        let grid = Grid::new(2.0 * PI, 200).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        let dx = 2.0 * PI / 201.0;
        for &d in lap.diag() {
            assert!((d + 2.0 / (dx * dx)).abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_rejects_tiny_grid() {
        let grid = Grid::new(1.0, 1).unwrap();
        assert!(matches!(
            build_laplacian(&grid),
            Err(SpectralError::InvalidGrid(_))
        ));
    }

    #[test]
    fn laplacian_reproduces_discrete_sine_eigenpair() {
        let grid = Grid::new(2.0 * PI, 200).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        let v: Vec<f64> = (0..grid.n())
            .map(|i| (PI * grid.x(i) / grid.length()).sin())
            .collect();
        let mu1 = discrete_laplacian_eigenvalue(&grid, 1);
        let mut out = vec![0.0; grid.n()];
        lap.apply(&v, &mut out);
        for (lhs, rhs) in out.iter().zip(&v) {
            assert!((lhs + mu1 * rhs).abs() <= 1e-10, "{lhs} vs {}", -mu1 * rhs);
        }
    }

    #[test]
    fn schrodinger_reduces_to_laplacian() {
        let grid = Grid::new(2.0 * PI, 50).unwrap();
        let g = Potential::zero(&grid);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        assert_eq!(a, lap);
    }

    #[test]
    fn schrodinger_constant_shift_and_sampled_potential() {
        let grid = Grid::new(2.0 * PI, 200).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        let c = Potential::constant(&grid, 1.5).unwrap();
        let a = build_schrodinger(&grid, &c, 0.0).unwrap();
        for (ad, ld) in a.diag().iter().zip(lap.diag()) {
            assert!((ad - (ld - 1.5)).abs() < 1e-12);
        }
        let g = Potential::cos3_plus_1(&grid);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        for (i, ad) in a.diag().iter().enumerate() {
            let expect = lap.diag()[i] - ((3.0 * grid.x(i)).cos() + 1.0);
            assert!((ad - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn schrodinger_rejects_sample_mismatch() {
        let grid = Grid::new(2.0 * PI, 50).unwrap();
        let other = Grid::new(2.0 * PI, 60).unwrap();
        let g = Potential::cos3_plus_1(&other);
        assert!(matches!(
            build_schrodinger(&grid, &g, 0.0),
            Err(SpectralError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_dx_constant_vectors() {
        let grid = Grid::new(4.0, 3).unwrap();
        let v = vec![1.0; 3];
        assert!((inner_dx(&v, &v, &grid).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn inner_dx_length_mismatch() {
        let grid = Grid::new(4.0, 3).unwrap();
        assert!(inner_dx(&[1.0, 2.0], &[1.0], &grid).is_err());
    }

    #[test]
    fn sign_changes_basic_patterns() {
        assert_eq!(count_sign_changes(&[1.0, 2.0, 3.0]).unwrap(), 0);
        assert_eq!(count_sign_changes(&[1.0, -1.0, 1.0]).unwrap(), 2);
        // zeros are skipped, not counted
        assert_eq!(count_sign_changes(&[1.0, 0.0, -1.0]).unwrap(), 1);
        assert!(count_sign_changes(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn asymptotic_gap_constant_potential_vanishes() {
        // The constant shift is exact against the discrete reference:
        // λ_k(c) − μ_k − mean(c) = 0.
        let grid = Grid::new(2.0 * PI, 120).unwrap();
        let c = 1.3;
        let g = Potential::constant(&grid, c).unwrap();
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let basis = eigendecompose(&a, 12, &grid).unwrap();
        assert!((g.mean_dx(&grid) - c).abs() < 1e-12);
        for k in 1..=12 {
            let gap = asymptotic_gap(&basis, &g, &grid, k).unwrap();
            assert!(gap.abs() <= 1e-8, "k={k}: {gap}");
        }
    }

    #[test]
    fn asymptotic_gap_shrinks_for_high_modes() {
        let grid = Grid::new(2.0 * PI, 200).unwrap();
        let g = Potential::linear(&grid);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let basis = eigendecompose(&a, 40, &grid).unwrap();
        let g5 = asymptotic_gap(&basis, &g, &grid, 5).unwrap();
        let g40 = asymptotic_gap(&basis, &g, &grid, 40).unwrap();
        assert!(g40.abs() < g5.abs(), "gap(40)={g40}, gap(5)={g5}");
    }

    #[test]
    fn asymptotic_gap_decay_trend_cos_potential() {
        let grid = Grid::new(2.0 * PI, 200).unwrap();
        let g = Potential::cos3_plus_1(&grid);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let basis = eigendecompose(&a, 40, &grid).unwrap();
        // Fit C over k = 10..40 and check |gap(k)| ≤ C/k throughout.
        let mut c_fit = 0.0f64;
        for k in 10..=40 {
            let gap = asymptotic_gap(&basis, &g, &grid, k).unwrap();
            c_fit = c_fit.max(gap.abs() * k as f64);
        }
        for k in 10..=40 {
            let gap = asymptotic_gap(&basis, &g, &grid, k).unwrap();
            assert!(gap.abs() <= c_fit / k as f64 + 1e-12);
        }
        // trend: mean magnitude over the tail window below the head window
        let window = |range: std::ops::RangeInclusive<usize>| {
            let mut acc = 0.0;
            let mut count = 0;
            for k in range {
                acc += asymptotic_gap(&basis, &g, &grid, k).unwrap().abs();
                count += 1;
            }
            acc / count as f64
        };
        assert!(window(30..=40) <= window(10..=20));
    }
}
