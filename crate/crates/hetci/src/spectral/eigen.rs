use std::f64::consts::PI;

use super::{dot_dx, Grid, PivotedTridiagonalLu, SpectralError, TridiagonalOperator};

/// The first `m` eigenpairs of `−A` on a grid: eigenvalues `λ_k` strictly
/// ascending and positive for nonnegative `g`, eigenvectors orthonormal in
/// the discrete inner product, plus the Laplacian references `λ_k' = (πk/L)²`.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    lambdas: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    lambdas_prime: Vec<f64>,
    m: usize,
}

impl SpectralBasis {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Eigenvalue `λ_k` of `−A`; `k` is the one-based mode index.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// Continuum Laplacian reference `λ_k' = (πk/L)²`.
    pub fn lambda_prime(&self, k: usize) -> f64 {
        self.lambdas_prime[k - 1]
    }

    /// Eigenvector `e_k` sampled at the interior points; one-based `k`.
    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k - 1]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Coefficients `⟨v, e_k⟩_dx` for `k = 1..m`.
    pub fn project(&self, v: &[f64], grid: &Grid) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|e| dot_dx(v, e, grid.dx()))
            .collect()
    }
}

/// Exact eigenvalue `μ_k = (2/dx²)(1 − cos(kπ/(N+1)))` of the negated
/// difference Laplacian on the grid; one-based `k`.
pub fn discrete_laplacian_eigenvalue(grid: &Grid, k: usize) -> f64 {
    let n1 = (grid.n() + 1) as f64;
    2.0 / (grid.dx() * grid.dx()) * (1.0 - (k as f64 * PI / n1).cos())
}

/// Sampled sine mode `e_k'(x_n) = sqrt(2/L)·sin(kπ x_n / L)`, which has
/// discrete norm exactly one for `k ≤ N`.
pub fn sine_mode(grid: &Grid, k: usize) -> Vec<f64> {
    let amp = (2.0 / grid.length()).sqrt();
    (0..grid.n())
        .map(|i| amp * (k as f64 * PI * grid.x(i) / grid.length()).sin())
        .collect()
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` strictly
/// below `x`, via the Sturm sequence of the shifted LDLᵀ factorization.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let n = diag.len();
    let guard = f64::MIN_POSITIVE;
    let mut count = 0usize;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < guard {
            if q >= 0.0 {
                guard
            } else {
                -guard
            }
        } else {
            q
        };
        q = (diag[i] - x) - off[i - 1] * off[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Computes the first `m` eigenpairs of `−A` for `op` holding the operator
/// `A` itself (i.e. built with `alpha = 0`); the returned `lambdas` are the
/// positive eigenvalues of `−A` in ascending order.
///
/// Eigenvalues come from Sturm bisection, eigenvectors from inverse iteration
/// with a pivoted tridiagonal LU; vectors are orthonormalized in `⟨·,·⟩_dx`
/// and sign-fixed so that `⟨e_k, e_k'⟩_dx ≥ 0` against the sampled sine mode
/// (first nonzero entry positive when that projection is negligible).
pub fn eigendecompose(
    op: &TridiagonalOperator,
    m: usize,
    grid: &Grid,
) -> Result<SpectralBasis, SpectralError> {
    let n = op.n();
    if n != grid.n() {
        return Err(SpectralError::DimensionMismatch {
            expected: grid.n(),
            got: n,
        });
    }
    if m == 0 || m > n {
        return Err(SpectralError::Truncation { m, n });
    }

    let neg = op.negated();
    let diag = neg.diag();
    let off = neg.off();

    // Gershgorin enclosure of the whole spectrum.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    lo -= 1.0;
    hi += 1.0;

    let scale = neg.norm_inf().max(1.0);
    let mut lambdas = Vec::with_capacity(m);
    for k in 0..m {
        let mut a = lo;
        let mut b = hi;
        for _ in 0..256 {
            let mid = 0.5 * (a + b);
            if (b - a) <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if sturm_count(diag, off, mid) <= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        lambdas.push(0.5 * (a + b));
    }

    for k in 1..m {
        if lambdas[k] <= lambdas[k - 1] {
            return Err(SpectralError::Convergence { index: k });
        }
    }

    let cluster_tol = 1e-7 * scale;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    let sub: Vec<f64> = off.to_vec();
    for (k, &lam) in lambdas.iter().enumerate() {
        let shifted: Vec<f64> = diag.iter().map(|d| d - lam).collect();
        let lu = PivotedTridiagonalLu::factor(&sub, &shifted, &sub);

        let mut v = vec![1.0; n];
        let norm0 = (n as f64).sqrt();
        for x in v.iter_mut() {
            *x /= norm0;
        }
        let mut converged = false;
        for _ in 0..16 {
            lu.solve_in_place(&mut v);
            // Deflate against neighbours of (numerically) clustered eigenvalues.
            for (j, prev) in vectors.iter().enumerate() {
                if (lambdas[j] - lam).abs() < cluster_tol {
                    let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (x, p) in v.iter_mut().zip(prev) {
                        *x -= proj * p;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(SpectralError::Convergence { index: k });
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            // residual ‖(−A − λ)v‖∞ against the matrix scale
            let mut res = 0.0f64;
            for i in 0..n {
                let mut y = shifted[i] * v[i];
                if i > 0 {
                    y += sub[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    y += sub[i] * v[i + 1];
                }
                res = res.max(y.abs());
            }
            if res <= 64.0 * f64::EPSILON * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SpectralError::Convergence { index: k });
        }

        // normalize in the dx inner product
        let inv = 1.0 / grid.dx().sqrt();
        for x in v.iter_mut() {
            *x *= inv;
        }

        // deterministic sign
        let reference = sine_mode(grid, k + 1);
        let s = dot_dx(&v, &reference, grid.dx());
        let flip = if s.abs() > 1e-12 {
            s < 0.0
        } else {
            v.iter().find(|x| **x != 0.0).map(|x| *x < 0.0).unwrap_or(false)
        };
        if flip {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        vectors.push(v);
    }

    let lambdas_prime = (1..=m)
        .map(|k| (PI * k as f64 / grid.length()).powi(2))
        .collect();

    Ok(SpectralBasis {
        lambdas,
        vectors,
        lambdas_prime,
        m,
    })
}
