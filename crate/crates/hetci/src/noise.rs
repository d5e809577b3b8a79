//! Q-Wiener noise: covariance specifications over a mixed eigenbasis and
//! reproducible sampling of spatially correlated increments.
//!
//! The covariance operator keeps `M` active modes. Its eigenfunctions agree
//! with the Laplacian sine modes above a cutoff `D` and are an orthonormal
//! mixture of the first `D` sine modes below it, so the whole operator is
//! described by `M` positive eigenvalues `q` and a `D×D` orthonormal mixing
//! matrix. Modes beyond `M` carry no noise (hard truncation), exactly as the
//! simulated scheme assumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{dot_dx, sine_mode, Grid, SpectralBasis};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("mixing cutoff {d} exceeds mode count {m}")]
    CutoffExceedsModes { d: usize, m: usize },
    #[error("expected {expected} covariance eigenvalues, got {got}")]
    EigenvalueCount { expected: usize, got: usize },
    #[error("mixing matrix must hold {expected} entries, got {got}")]
    MixingShape { expected: usize, got: usize },
    #[error("covariance spec failed validation: {0}")]
    Invalid(String),
}

/// Truncated Q-Wiener covariance: `M` active modes, `D ≤ M` mixed ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    m: usize,
    d: usize,
    q: Vec<f64>,
    mix: Vec<f64>,
    decay_exponent: f64,
}

impl CovarianceSpec {
    /// `mix` is the row-major `D×D` mixing matrix; row `j` holds the sine-mode
    /// coefficients of the `j`-th noise eigenfunction.
    pub fn new(
        m: usize,
        d: usize,
        q: Vec<f64>,
        mix: Vec<f64>,
        decay_exponent: f64,
    ) -> Result<Self, NoiseError> {
        if d > m || m == 0 {
            return Err(NoiseError::CutoffExceedsModes { d, m });
        }
        if q.len() != m {
            return Err(NoiseError::EigenvalueCount {
                expected: m,
                got: q.len(),
            });
        }
        if mix.len() != d * d {
            return Err(NoiseError::MixingShape {
                expected: d * d,
                got: mix.len(),
            });
        }
        Ok(Self {
            m,
            d,
            q,
            mix,
            decay_exponent,
        })
    }

    /// Identity mixing with the given eigenvalues.
    pub fn diagonal(q: Vec<f64>, decay_exponent: f64) -> Result<Self, NoiseError> {
        let m = q.len();
        let mut mix = vec![0.0; m * m];
        for j in 0..m {
            mix[j * m + j] = 1.0;
        }
        Self::new(m, m, q, mix, decay_exponent)
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn mixing_cutoff(&self) -> usize {
        self.d
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.q
    }

    /// Largest covariance eigenvalue `q* = max_j q_j` of the truncation.
    pub fn q_star(&self) -> f64 {
        self.q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn decay_exponent(&self) -> f64 {
        self.decay_exponent
    }

    pub fn mix_entry(&self, row: usize, col: usize) -> f64 {
        self.mix[row * self.d + col]
    }

    pub fn mix(&self) -> &[f64] {
        &self.mix
    }

    /// Realized noise eigenfunctions sampled on the grid: mixed sine modes for
    /// `n ≤ D`, pure sine modes for `D < n ≤ M`.
    pub fn eigenfields(&self, grid: &Grid) -> Vec<Vec<f64>> {
        let sines: Vec<Vec<f64>> = (1..=self.m).map(|k| sine_mode(grid, k)).collect();
        let mut fields = Vec::with_capacity(self.m);
        for n in 0..self.m {
            if n < self.d {
                let mut b = vec![0.0; grid.n()];
                for (mcol, sine) in sines.iter().enumerate().take(self.d) {
                    let w = self.mix_entry(n, mcol);
                    if w != 0.0 {
                        for (bi, si) in b.iter_mut().zip(sine) {
                            *bi += w * si;
                        }
                    }
                }
                fields.push(b);
            } else {
                fields.push(sines[n].clone());
            }
        }
        fields
    }
}

/// One named rule violation found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// `q_j ≤ 0` for some mode.
    NonpositiveEigenvalue { index: usize, value: f64 },
    /// `‖OᵀO − I‖_max` beyond tolerance.
    MixNotOrthonormal { max_deviation: f64 },
    /// Non-finite entries anywhere in the spec.
    NonFinite,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonpositiveEigenvalue { index, value } => {
                write!(f, "positivity: q[{index}] = {value} is not positive")
            }
            Violation::MixNotOrthonormal { max_deviation } => {
                write!(f, "orthonormality: max |OᵀO − I| = {max_deviation:.3e}")
            }
            Violation::NonFinite => write!(f, "non-finite entry in spec"),
        }
    }
}

/// Outcome of validating a covariance spec. The decay condition
/// `Σ q_j λ_j'^γ < ∞` is a statement about the infinite tail; here only the
/// truncated sum is computable and it is reported (with the unit-length
/// convention `λ_j' = (πj)²`) rather than gated.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Truncated decay sum `Σ_{j≤M} q_j ((πj)²)^γ`.
    pub decay_sum: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

pub fn validate(spec: &CovarianceSpec) -> ValidationReport {
    let mut violations = Vec::new();

    if spec.q.iter().chain(spec.mix.iter()).any(|x| !x.is_finite()) {
        violations.push(Violation::NonFinite);
    }
    for (index, &value) in spec.q.iter().enumerate() {
        if !(value > 0.0) {
            violations.push(Violation::NonpositiveEigenvalue { index, value });
        }
    }

    let d = spec.d;
    let mut max_dev = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut dot = 0.0;
            for r in 0..d {
                dot += spec.mix_entry(r, i) * spec.mix_entry(r, j);
            }
            let target = if i == j { 1.0 } else { 0.0 };
            max_dev = max_dev.max((dot - target).abs());
        }
    }
    if max_dev > ORTHONORMALITY_TOL {
        violations.push(Violation::MixNotOrthonormal {
            max_deviation: max_dev,
        });
    }

    let decay_sum = spec
        .q
        .iter()
        .enumerate()
        .map(|(j, q)| {
            let lp = (std::f64::consts::PI * (j + 1) as f64).powi(2);
            q * lp.powf(spec.decay_exponent)
        })
        .sum();

    ValidationReport {
        violations,
        decay_sum,
    }
}

/// Draws a random spec: the mixing matrix orthonormalizes a Gaussian `D×D`
/// matrix (rows sign-fixed to a nonnegative diagonal, so the output is unique)
/// and the eigenvalues are uniform on `(0, 1]` rescaled to `max q_j = 1`.
pub fn random_spec(m: usize, d: usize, seed: u64) -> Result<CovarianceSpec, NoiseError> {
    if d > m || m == 0 || d == 0 {
        return Err(NoiseError::CutoffExceedsModes { d, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut rows: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    // modified Gram-Schmidt, two passes
    for i in 0..d {
        for _ in 0..2 {
            for j in 0..i {
                let proj: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                for c in 0..d {
                    rows[i][c] -= proj * rows[j][c];
                }
            }
        }
        let norm = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in rows[i].iter_mut() {
            *x /= norm;
        }
        if rows[i][i] < 0.0 {
            for x in rows[i].iter_mut() {
                *x = -*x;
            }
        }
    }
    let mut mix = Vec::with_capacity(d * d);
    for row in &rows {
        mix.extend_from_slice(row);
    }

    let mut q: Vec<f64> = (0..m).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in q.iter_mut() {
        *x /= max;
    }

    CovarianceSpec::new(m, d, q, mix, 1.0)
}

/// Reproducible per-trajectory random stream, keyed by a master seed and the
/// trajectory index so ensemble members are independent and replayable.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            draws: 0,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Number of variates drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.gen()
    }
}

/// Precomputed sine-mode table for fast repeated increment sampling.
pub struct NoiseSampler {
    m: usize,
    d: usize,
    n: usize,
    sqrt_q: Vec<f64>,
    mix: Vec<f64>,
    /// `M×N` row-major table of sampled sine modes.
    modes: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(spec: &CovarianceSpec, grid: &Grid) -> Self {
        let n = grid.n();
        let mut modes = vec![0.0; spec.m * n];
        for k in 0..spec.m {
            let row = sine_mode(grid, k + 1);
            modes[k * n..(k + 1) * n].copy_from_slice(&row);
        }
        Self {
            m: spec.m,
            d: spec.d,
            n,
            sqrt_q: spec.q.iter().map(|q| q.sqrt()).collect(),
            mix: spec.mix.clone(),
            modes,
        }
    }

    /// Draws `M` standard normals from `rng` and writes the spatial increment
    /// `√dt · Σ_n √q_n ξ_n b_n(x)` into `out`. The noise amplitude `σ` is the
    /// caller's concern. All `M` variates are always consumed, so the stream
    /// position is independent of `dt` and of the spec contents.
    pub fn sample_into(&self, dt: f64, rng: &mut RngStream, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        let mut coeff = vec![0.0; self.m];
        self.sample_with_scratch(dt, rng, out, &mut coeff);
    }

    /// Allocation-free variant for hot loops; `coeff` must hold `M` slots.
    pub fn sample_with_scratch(
        &self,
        dt: f64,
        rng: &mut RngStream,
        out: &mut [f64],
        coeff: &mut [f64],
    ) {
        assert_eq!(out.len(), self.n);
        assert_eq!(coeff.len(), self.m);
        coeff.fill(0.0);
        for n_mode in 0..self.m {
            let amp = self.sqrt_q[n_mode] * rng.standard_normal();
            if n_mode < self.d {
                let row = &self.mix[n_mode * self.d..(n_mode + 1) * self.d];
                for (c, w) in coeff[..self.d].iter_mut().zip(row) {
                    *c += amp * w;
                }
            } else {
                coeff[n_mode] += amp;
            }
        }
        let sqrt_dt = dt.sqrt();
        out.fill(0.0);
        for (k, &c) in coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.modes[k * self.n..(k + 1) * self.n];
            let w = sqrt_dt * c;
            for (o, s) in out.iter_mut().zip(row) {
                *o += w * s;
            }
        }
    }
}

/// One-shot spatial noise increment over a step of size `dt`.
pub fn sample_increment(
    spec: &CovarianceSpec,
    grid: &Grid,
    dt: f64,
    rng: &mut RngStream,
) -> Vec<f64> {
    let sampler = NoiseSampler::new(spec, grid);
    let mut out = vec![0.0; grid.n()];
    sampler.sample_into(dt, rng, &mut out);
    out
}

/// Symmetric `m×m` matrix of noise covariances in a spectral basis:
/// `C(i, j) = Σ_{n≤M} q_n ⟨e_i, b_n⟩_dx ⟨e_j, b_n⟩_dx`.
#[derive(Clone, Debug)]
pub struct BasisCovariance {
    m: usize,
    data: Vec<f64>,
}

impl BasisCovariance {
    pub fn size(&self) -> usize {
        self.m
    }

    /// Zero-based entry access.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }
}

pub fn covariance_in_basis(
    spec: &CovarianceSpec,
    basis: &SpectralBasis,
    grid: &Grid,
) -> BasisCovariance {
    let m = basis.m();
    let fields = spec.eigenfields(grid);
    // projections P[i][n] = ⟨e_i, b_n⟩_dx
    let proj: Vec<Vec<f64>> = (1..=m)
        .map(|i| {
            fields
                .iter()
                .map(|b| dot_dx(basis.eigenvector(i), b, grid.dx()))
                .collect()
        })
        .collect();
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (n_mode, q) in spec.q.iter().enumerate() {
                acc += q * proj[i][n_mode] * proj[j][n_mode];
            }
            data[i * m + j] = acc;
            data[j * m + i] = acc;
        }
    }
    BasisCovariance { m, data }
}
