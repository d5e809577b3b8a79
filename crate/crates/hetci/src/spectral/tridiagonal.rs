use super::SpectralError;

/// Symmetric tridiagonal operator stored as its main diagonal and the shared
/// sub/super-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, SpectralError> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: diag.len().saturating_sub(1),
                got: off.len(),
            });
        }
        Ok(Self { diag, off })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// Returns the negated operator (same sparsity, flipped sign).
    pub fn negated(&self) -> Self {
        Self {
            diag: self.diag.iter().map(|d| -d).collect(),
            off: self.off.iter().map(|e| -e).collect(),
        }
    }

    /// `out = T v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        assert_eq!(v.len(), n);
        assert_eq!(out.len(), n);
        if n == 1 {
            out[0] = self.diag[0] * v[0];
            return;
        }
        out[0] = self.diag[0] * v[0] + self.off[0] * v[1];
        for i in 1..n - 1 {
            out[i] = self.off[i - 1] * v[i - 1] + self.diag[i] * v[i] + self.off[i] * v[i + 1];
        }
        out[n - 1] = self.off[n - 2] * v[n - 2] + self.diag[n - 1] * v[n - 1];
    }

    /// Infinity norm, used to scale convergence thresholds.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0f64;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            best = best.max(left + self.diag[i].abs() + right);
        }
        best
    }
}

/// LU factorization with partial pivoting of a general (not necessarily
/// symmetric or dominant) tridiagonal matrix. Row swaps introduce a second
/// superdiagonal, stored in `du2`.
///
/// Exactly singular pivots are replaced by a tiny value of the matrix scale;
/// inverse iteration relies on this to solve nearly singular shifted systems.
#[derive(Clone, Debug)]
pub struct PivotedTridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
    n: usize,
}

impl PivotedTridiagonalLu {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 1);
        assert_eq!(sub.len(), n.saturating_sub(1));
        assert_eq!(sup.len(), n.saturating_sub(1));

        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];

        let scale = diag
            .iter()
            .chain(sub)
            .chain(sup)
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1.0);
        let tiny = f64::EPSILON * scale * 1e-3;

        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i].abs() < tiny {
                    d[i] = if d[i] >= 0.0 { tiny } else { -tiny };
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
                if i + 2 < n {
                    du2[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1].abs() < tiny {
            d[n - 1] = if d[n - 1] >= 0.0 { tiny } else { -tiny };
        }

        Self {
            dl,
            d,
            du,
            du2,
            swapped,
            n,
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[n - 1] /= self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = diag[i] * x[i];
            if i > 0 {
                y[i] += sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y[i] += sup[i] * x[i + 1];
            }
        }
        y
    }

    #[test]
    fn pivoted_lu_solves_nonsymmetric_system() {
        let sub = vec![1.5, 3.0, -2.0, 0.5];
        let diag = vec![0.1, 2.0, -1.0, 4.0, 0.3];
        let sup = vec![2.0, -0.5, 1.0, 2.5];
        let x_true = vec![1.0, -2.0, 3.0, 0.5, -1.5];
        let mut b = dense_apply(&sub, &diag, &sup, &x_true);
        let lu = PivotedTridiagonalLu::factor(&sub, &diag, &sup);
        lu.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn pivoted_lu_handles_indefinite_shift() {
        // T − λI with λ inside the spectrum needs pivoting.
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 - 0.01 * i as f64 - 1.7).collect();
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut b = dense_apply(&sub, &diag, &sup, &x_true);
        let lu = PivotedTridiagonalLu::factor(&sub, &diag, &sup);
        lu.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn apply_matches_dense() {
        let op = TridiagonalOperator::new(vec![2.0, 1.0, -1.0], vec![0.5, -0.25]).unwrap();
        let mut out = vec![0.0; 3];
        op.apply(&[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out, vec![3.0, 1.75, -3.5]);
    }
}
