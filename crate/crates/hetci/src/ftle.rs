//! Finite-time Lyapunov exponents: `L_k(t) = (1/t)·log` of the `k`-volume
//! growth of a tangent bundle carried by the first-variation equation along
//! a base trajectory.
//!
//! Volumes are tracked through the diagonal scale factors of periodic
//! Gram–Schmidt re-orthonormalization, which keeps the accounting exact while
//! preventing under/overflow. The upper bound `Σ_{j≤k}(α − λ_j)` holds
//! pathwise for every sample; above the threshold a positive fraction of
//! trajectories realizes exponents near that bound.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    noisy_null_state, DynamicsError, FieldState, SemiImplicitSolver, SimConfig,
};
use crate::noise::{CovarianceSpec, NoiseSampler, RngStream};
use crate::spectral::{build_schrodinger, eigendecompose, Grid, Potential, SpectralBasis, SpectralError};

/// Default re-orthonormalization cadence, in steps.
pub const DEFAULT_RENORM_EVERY: usize = 10;

#[derive(Debug, Error)]
pub enum FtleError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("tangent bundle is rank deficient: vector {vector} collapsed to scale {scale:.3e}")]
    DegenerateBundle { vector: usize, scale: f64 },
    #[error("tangent bundle needs at least one vector")]
    EmptyBundle,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("ensemble records are not homogeneous: {0}")]
    InhomogeneousEnsemble(String),
}

/// `k` tangent fields plus the accumulated log of their `k`-volume growth.
///
/// Orthonormalization uses the weighted inner product `w·Σ v_i w_i`; the
/// production weight is `dx`. Because the weight is uniform in space the
/// accumulated growth is identical for any positive weight (the scale cancels
/// between renormalizations), which is checked in the tests.
#[derive(Clone, Debug)]
pub struct TangentBundle {
    vectors: Vec<Vec<f64>>,
    weight: f64,
    log_volume: f64,
}

impl TangentBundle {
    /// Orthonormalizes the given vectors in `⟨·,·⟩_dx`; the initial volume is
    /// normalized away, so `log_volume` starts at zero.
    pub fn new(vectors: Vec<Vec<f64>>, grid: &Grid) -> Result<Self, FtleError> {
        Self::with_weight(vectors, grid.dx())
    }

    pub fn with_weight(vectors: Vec<Vec<f64>>, weight: f64) -> Result<Self, FtleError> {
        if vectors.is_empty() {
            return Err(FtleError::EmptyBundle);
        }
        let n = vectors[0].len();
        if vectors.iter().any(|v| v.len() != n) {
            return Err(FtleError::Dimension {
                expected: n,
                got: vectors.iter().map(|v| v.len()).min().unwrap_or(0),
            });
        }
        let mut bundle = Self {
            vectors,
            weight,
            log_volume: 0.0,
        };
        bundle.renormalize()?;
        bundle.log_volume = 0.0;
        Ok(bundle)
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.vectors
    }

    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    /// Modified Gram–Schmidt in the weighted inner product; adds the log of
    /// each diagonal scale factor to the volume account.
    pub fn renormalize(&mut self) -> Result<(), FtleError> {
        let k = self.vectors.len();
        for j in 0..k {
            let (done, rest) = self.vectors.split_at_mut(j);
            let v = &mut rest[0];
            for q in done.iter() {
                let proj: f64 = self.weight * v.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
                for (x, qi) in v.iter_mut().zip(q) {
                    *x -= proj * qi;
                }
            }
            let norm = (self.weight * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
            if !(norm > 1e-300) || !norm.is_finite() {
                return Err(FtleError::DegenerateBundle {
                    vector: j,
                    scale: norm,
                });
            }
            let inv = 1.0 / norm;
            for x in v.iter_mut() {
                *x *= inv;
            }
            self.log_volume += norm.ln();
        }
        Ok(())
    }

    /// Checks pairwise weighted orthonormality; used by tests and debugging.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.vectors.len();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let dot: f64 = self.weight
                    * self.vectors[i]
                        .iter()
                        .zip(&self.vectors[j])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// One time step of tangent dynamics; implementations either freeze the base
/// at zero (exact linear fixture) or carry a live SPDE trajectory.
pub trait TangentFlow {
    fn dt(&self) -> f64;
    fn step(&mut self, vectors: &mut [Vec<f64>]) -> Result<(), FtleError>;
}

/// Exact spectral propagator of the linearization at the origin: every basis
/// coefficient is multiplied by `exp((α − λ_k)dt)` per step. A test fixture —
/// components outside the basis span are discarded, so pass a full basis
/// (`m = N`) for generic vectors.
pub struct FrozenLinearFlow<'a> {
    basis: &'a SpectralBasis,
    grid: &'a Grid,
    factors: Vec<f64>,
    dt: f64,
}

impl<'a> FrozenLinearFlow<'a> {
    pub fn new(basis: &'a SpectralBasis, grid: &'a Grid, alpha: f64, dt: f64) -> Self {
        let factors = basis
            .lambdas()
            .iter()
            .map(|l| ((alpha - l) * dt).exp())
            .collect();
        Self {
            basis,
            grid,
            factors,
            dt,
        }
    }
}

impl TangentFlow for FrozenLinearFlow<'_> {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&mut self, vectors: &mut [Vec<f64>]) -> Result<(), FtleError> {
        for v in vectors.iter_mut() {
            let coeffs = self.basis.project(v, self.grid);
            v.fill(0.0);
            for ((c, f), e) in coeffs
                .iter()
                .zip(&self.factors)
                .zip(self.basis.vectors())
            {
                let w = c * f;
                for (x, ei) in v.iter_mut().zip(e) {
                    *x += w * ei;
                }
            }
        }
        Ok(())
    }
}

/// First-variation flow along a live nonlinear trajectory: tangents see the
/// damping `−3u²` of the base state at the start of each step, then the base
/// advances with fresh noise.
pub struct VariationalFlow<'a> {
    solver: SemiImplicitSolver,
    sampler: NoiseSampler,
    rng: &'a mut RngStream,
    base: FieldState,
    sigma: f64,
    inc: Vec<f64>,
    coeff: Vec<f64>,
}

impl<'a> VariationalFlow<'a> {
    pub fn new(
        g: &Potential,
        alpha: f64,
        spec: &CovarianceSpec,
        base: FieldState,
        dt: f64,
        sigma: f64,
        grid: &Grid,
        rng: &'a mut RngStream,
    ) -> Result<Self, FtleError> {
        let a_alpha = build_schrodinger(grid, g, alpha)?;
        Ok(Self {
            solver: SemiImplicitSolver::new(&a_alpha, dt)?,
            sampler: NoiseSampler::new(spec, grid),
            rng,
            base,
            sigma,
            inc: vec![0.0; grid.n()],
            coeff: vec![0.0; spec.modes()],
        })
    }

    pub fn base(&self) -> &FieldState {
        &self.base
    }
}

impl TangentFlow for VariationalFlow<'_> {
    fn dt(&self) -> f64 {
        self.solver.dt()
    }

    fn step(&mut self, vectors: &mut [Vec<f64>]) -> Result<(), FtleError> {
        for v in vectors.iter_mut() {
            self.solver.advance_variation(v, &self.base.values)?;
        }
        self.sampler
            .sample_with_scratch(self.solver.dt(), self.rng, &mut self.inc, &mut self.coeff);
        self.solver
            .advance_nonlinear(&mut self.base, &self.inc, self.sigma)?;
        Ok(())
    }
}

/// Exponent series `L_k(t) = log_volume(t)/t`, sampled at the
/// re-orthonormalization times of the bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct FtleRecord {
    pub times: Vec<f64>,
    pub exponents: Vec<f64>,
    pub k: usize,
    /// `(master_seed, stream_index)` of the driving stream, when stochastic.
    pub seed: Option<(u64, u64)>,
}

impl FtleRecord {
    pub fn final_exponent(&self) -> f64 {
        *self.exponents.last().expect("record holds at least one sample")
    }

    pub fn max_exponent(&self) -> f64 {
        self.exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Advances the bundle `steps` times under `flow`, re-orthonormalizing every
/// `renorm_every` steps and sampling `L_k` at each renormalization (plus a
/// final one when `steps` is not a multiple of the cadence).
pub fn evolve_tangents(
    bundle: &mut TangentBundle,
    flow: &mut dyn TangentFlow,
    renorm_every: usize,
    steps: usize,
) -> Result<FtleRecord, FtleError> {
    let renorm_every = renorm_every.max(1);
    let dt = flow.dt();
    let k = bundle.k();
    let mut times = Vec::new();
    let mut exponents = Vec::new();
    let mut done = 0usize;
    while done < steps {
        let chunk = renorm_every.min(steps - done);
        for _ in 0..chunk {
            flow.step(&mut bundle.vectors)?;
        }
        done += chunk;
        bundle.renormalize()?;
        let t = done as f64 * dt;
        times.push(t);
        exponents.push(bundle.log_volume() / t);
    }
    Ok(FtleRecord {
        times,
        exponents,
        k,
        seed: None,
    })
}

/// Burn-in horizon used to approximate the attractor before measuring:
/// `20/(λ₁ − α)` below the threshold, `50` above it.
pub fn default_burn_in_time(lambda1: f64, alpha: f64) -> f64 {
    if alpha < lambda1 {
        20.0 / (lambda1 - alpha)
    } else {
        50.0
    }
}

/// Runs burn-in to reach the attractor, resets the clock, then measures
/// `L_k(t)` over `cfg.nt` steps of the first-variation flow.
///
/// Burn-in length is `cfg.burn_in` steps when positive, otherwise derived
/// from [`default_burn_in_time`]. Tangents start from `k` random fields drawn
/// from the same stream, so the whole record is reproducible from the seed.
#[allow(clippy::too_many_arguments)]
pub fn ftle_on_attractor(
    g: &Potential,
    alpha: f64,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    k: usize,
    grid: &Grid,
    rng: &mut RngStream,
) -> Result<FtleRecord, FtleError> {
    let a0 = build_schrodinger(grid, g, 0.0)?;
    let basis = eigendecompose(&a0, 1, grid)?;
    let lambda1 = basis.lambda(1);

    let burn_steps = if cfg.burn_in > 0 {
        cfg.burn_in
    } else {
        (default_burn_in_time(lambda1, alpha) / cfg.dt).ceil() as usize
    };

    let seed = (rng.master_seed(), rng.stream_index());
    let mut base = noisy_null_state(spec, grid, cfg.dt, cfg.sigma, rng);
    let a_alpha = build_schrodinger(grid, g, alpha)?;
    let solver = SemiImplicitSolver::new(&a_alpha, cfg.dt)?;
    let sampler = NoiseSampler::new(spec, grid);
    let mut inc = vec![0.0; grid.n()];
    let mut coeff = vec![0.0; spec.modes()];
    for _ in 0..burn_steps {
        sampler.sample_with_scratch(cfg.dt, rng, &mut inc, &mut coeff);
        solver
            .advance_nonlinear(&mut base, &inc, cfg.sigma)
            .map_err(FtleError::from)?;
    }
    base.t = 0.0;

    let vectors: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..grid.n()).map(|_| rng.standard_normal()).collect())
        .collect();
    let mut bundle = TangentBundle::new(vectors, grid)?;
    let mut flow = VariationalFlow::new(g, alpha, spec, base, cfg.dt, cfg.sigma, grid, rng)?;
    let mut record = evolve_tangents(&mut bundle, &mut flow, DEFAULT_RENORM_EVERY, cfg.nt)?;
    record.seed = Some(seed);
    Ok(record)
}

/// Independent FTLE records for `members` trajectories, stream index = member
/// index; parallel over members, gathered in index order.
pub fn ftle_ensemble(
    g: &Potential,
    alpha: f64,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    k: usize,
    grid: &Grid,
    master_seed: u64,
    members: usize,
) -> Result<Vec<FtleRecord>, FtleError> {
    (0..members)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(master_seed, i as u64);
            ftle_on_attractor(g, alpha, spec, cfg, k, grid, &mut rng)
        })
        .collect()
}

/// Ensemble summary against the theoretical bound `Λ = Σ_{j≤k}(α − λ_j)`.
#[derive(Clone, Debug)]
pub struct BoundReport {
    /// Theoretical bound `Λ`.
    pub bound: f64,
    /// Tolerance added to the bound when counting violations.
    pub tol: f64,
    /// Common sample times of the ensemble.
    pub times: Vec<f64>,
    /// Fraction of members with `L_k(t) > Λ + tol`, per time.
    pub violation_fraction: Vec<f64>,
    /// Largest exponent observed anywhere in the ensemble.
    pub empirical_max: f64,
    /// `Λ − empirical_max`.
    pub gap: f64,
    /// Fraction of members whose final exponent is positive.
    pub fraction_positive: f64,
}

pub fn bound_report(
    records: &[FtleRecord],
    basis: &SpectralBasis,
    alpha: f64,
    tol: f64,
) -> Result<BoundReport, FtleError> {
    let first = records
        .first()
        .ok_or_else(|| FtleError::InhomogeneousEnsemble("empty ensemble".into()))?;
    let k = first.k;
    if basis.m() < k {
        return Err(FtleError::Spectral(SpectralError::Truncation {
            m: k,
            n: basis.m(),
        }));
    }
    for r in records {
        if r.k != k || r.times != first.times {
            return Err(FtleError::InhomogeneousEnsemble(
                "mixed blade orders or sample times".into(),
            ));
        }
    }
    let bound: f64 = (1..=k).map(|j| alpha - basis.lambda(j)).sum();

    let mut violation_fraction = Vec::with_capacity(first.times.len());
    for ti in 0..first.times.len() {
        let violations = records
            .iter()
            .filter(|r| r.exponents[ti] > bound + tol)
            .count();
        violation_fraction.push(violations as f64 / records.len() as f64);
    }
    let empirical_max = records
        .iter()
        .map(|r| r.max_exponent())
        .fold(f64::NEG_INFINITY, f64::max);
    let fraction_positive = records
        .iter()
        .filter(|r| r.final_exponent() > 0.0)
        .count() as f64
        / records.len() as f64;

    Ok(BoundReport {
        bound,
        tol,
        times: first.times.clone(),
        violation_fraction,
        empirical_max,
        gap: bound - empirical_max,
        fraction_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::random_spec;
    use crate::spectral::inner_dx;
    use std::f64::consts::PI;

    fn setup(n: usize, m: usize) -> (Grid, Potential, SpectralBasis) {
        let grid = Grid::new(2.0 * PI, n).unwrap();
        let g = Potential::cos3_plus_1(&grid);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let basis = eigendecompose(&a, m, &grid).unwrap();
        (grid, g, basis)
    }

    #[test]
    fn frozen_mode_exponent_is_exact() {
        let (grid, _, basis) = setup(80, 5);
        let alpha = basis.lambda(1) - 0.2;
        let dt = 1e-3;
        let mut flow = FrozenLinearFlow::new(&basis, &grid, alpha, dt);
        let mut bundle = TangentBundle::new(vec![basis.eigenvector(1).to_vec()], &grid).unwrap();
        let record = evolve_tangents(&mut bundle, &mut flow, 10, 5_000).unwrap();
        let expect = alpha - basis.lambda(1);
        for (t, l) in record.times.iter().zip(&record.exponents) {
            assert!((l - expect).abs() <= 1e-8, "t={t}: {l} vs {expect}");
        }
    }

    #[test]
    fn frozen_two_blade_sums_exponents() {
        let (grid, _, basis) = setup(80, 5);
        let alpha = basis.lambda(1) + 0.1;
        let dt = 1e-3;
        let mut flow = FrozenLinearFlow::new(&basis, &grid, alpha, dt);
        let mut bundle = TangentBundle::new(
            vec![basis.eigenvector(1).to_vec(), basis.eigenvector(2).to_vec()],
            &grid,
        )
        .unwrap();
        let record = evolve_tangents(&mut bundle, &mut flow, 10, 2_000).unwrap();
        let expect = (alpha - basis.lambda(1)) + (alpha - basis.lambda(2));
        assert!((record.final_exponent() - expect).abs() <= 1e-8);
    }

    #[test]
    fn blade_increments_match_single_mode_rates() {
        let (grid, _, basis) = setup(60, 4);
        let alpha = 0.9;
        let dt = 1e-3;
        let steps = 3_000;
        let mut finals = Vec::new();
        for k in 1..=3 {
            let mut flow = FrozenLinearFlow::new(&basis, &grid, alpha, dt);
            let vectors: Vec<Vec<f64>> =
                (1..=k).map(|j| basis.eigenvector(j).to_vec()).collect();
            let mut bundle = TangentBundle::new(vectors, &grid).unwrap();
            let record = evolve_tangents(&mut bundle, &mut flow, 10, steps).unwrap();
            finals.push(record.final_exponent());
        }
        for k in 1..3 {
            let increment = finals[k] - finals[k - 1];
            let expect = alpha - basis.lambda(k + 1);
            assert!((increment - expect).abs() <= 1e-8, "k={k}");
        }
    }

    #[test]
    fn generic_vector_converges_from_below() {
        // Full basis so the frozen flow is exact for arbitrary vectors.
        let (grid, _, basis) = setup(60, 60);
        let alpha = basis.lambda(1) - 0.1;
        let dt = 1e-2;
        let t_end = 200.0;
        let steps = (t_end / dt) as usize;
        let mut rng = RngStream::new(42, 0);
        let v0: Vec<f64> = (0..grid.n()).map(|_| rng.standard_normal()).collect();
        let mut bundle = TangentBundle::new(vec![v0], &grid).unwrap();
        let c1 = inner_dx(&bundle.vectors()[0], basis.eigenvector(1), &grid).unwrap();
        let mut flow = FrozenLinearFlow::new(&basis, &grid, alpha, dt);
        let record = evolve_tangents(&mut bundle, &mut flow, 10, steps).unwrap();
        let target = alpha - basis.lambda(1);
        let final_l = record.final_exponent();
        assert!(final_l <= target + 1e-12);
        let budget = 2.0 * (1.0 / c1.abs()).ln() / t_end;
        assert!(
            (final_l - target).abs() <= budget.max(1e-6),
            "gap {} budget {}",
            (final_l - target).abs(),
            budget
        );
    }

    #[test]
    fn renormalization_cadence_does_not_change_exponent() {
        let (grid, g, _) = setup(48, 2);
        let spec = random_spec(6, 3, 4).unwrap();
        let alpha = 1.0;
        let dt = 1e-3;
        let steps = 2_000;
        let run = |renorm_every: usize| {
            let mut rng = RngStream::new(99, 0);
            let base = noisy_null_state(&spec, &grid, dt, 0.05, &mut rng);
            let v0 = crate::spectral::sine_mode(&grid, 1);
            let mut bundle = TangentBundle::new(vec![v0], &grid).unwrap();
            let mut flow =
                VariationalFlow::new(&g, alpha, &spec, base, dt, 0.05, &grid, &mut rng).unwrap();
            evolve_tangents(&mut bundle, &mut flow, renorm_every, steps).unwrap()
        };
        let a = run(5);
        let b = run(10);
        assert!((a.final_exponent() - b.final_exponent()).abs() < 1e-6);
    }

    #[test]
    fn weight_choice_does_not_change_exponent() {
        let (grid, _, basis) = setup(50, 50);
        let alpha = 0.7;
        let dt = 1e-2;
        let mut rng = RngStream::new(3, 0);
        let vectors: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..grid.n()).map(|_| rng.standard_normal()).collect())
            .collect();
        let run = |weight: f64| {
            let mut bundle = TangentBundle::with_weight(vectors.clone(), weight).unwrap();
            let mut flow = FrozenLinearFlow::new(&basis, &grid, alpha, dt);
            evolve_tangents(&mut bundle, &mut flow, 10, 5_000)
                .unwrap()
                .final_exponent()
        };
        let with_dx = run(grid.dx());
        let euclid = run(1.0);
        assert!((with_dx - euclid).abs() <= 1e-3, "{with_dx} vs {euclid}");
    }

    #[test]
    fn deterministic_attractor_recovers_linear_rate() {
        // σ = 0 below the threshold: the attractor is the origin and the
        // exponent equals α − λ₁ up to the O(dt) bias of the stepper; a tiny
        // dt keeps that within 1e−6.
        let (grid, g, basis) = setup(60, 1);
        let alpha = basis.lambda(1) - 0.2;
        let spec = random_spec(4, 2, 1).unwrap();
        let dt = 1e-5;
        let cfg = SimConfig::new(dt, 10_000, 0.0).unwrap().with_burn_in(100);
        let mut rng = RngStream::new(12, 0);
        let record = ftle_on_attractor(&g, alpha, &spec, &cfg, 1, &grid, &mut rng).unwrap();
        let expect = alpha - basis.lambda(1);
        assert!(
            (record.final_exponent() - expect).abs() <= 1e-6,
            "{} vs {expect}",
            record.final_exponent()
        );
    }

    #[test]
    fn bundle_orthonormal_after_renormalization() {
        let (grid, _, basis) = setup(40, 3);
        let mut bundle = TangentBundle::new(
            vec![
                basis.eigenvector(1).to_vec(),
                basis.eigenvector(2).to_vec(),
                basis.eigenvector(3).to_vec(),
            ],
            &grid,
        )
        .unwrap();
        bundle.renormalize().unwrap();
        assert!(bundle.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn rank_collapse_is_reported() {
        let grid = Grid::new(2.0 * PI, 16).unwrap();
        let v = crate::spectral::sine_mode(&grid, 1);
        let err = TangentBundle::new(vec![v.clone(), v], &grid).unwrap_err();
        assert!(matches!(err, FtleError::DegenerateBundle { vector: 1, .. }));
    }

    #[test]
    fn bound_report_counts_violations_and_sign() {
        let records = vec![
            FtleRecord {
                times: vec![1.0, 2.0],
                exponents: vec![-0.2, -0.1],
                k: 1,
                seed: None,
            },
            FtleRecord {
                times: vec![1.0, 2.0],
                exponents: vec![0.3, 0.05],
                k: 1,
                seed: None,
            },
        ];
        let (grid, g, _) = setup(40, 1);
        let a = build_schrodinger(&grid, &g, 0.0).unwrap();
        let basis = eigendecompose(&a, 1, &grid).unwrap();
        let alpha = basis.lambda(1) + 0.1; // bound = +0.1
        let report = bound_report(&records, &basis, alpha, 0.02).unwrap();
        assert!((report.bound - 0.1).abs() < 1e-12);
        assert_eq!(report.violation_fraction, vec![0.5, 0.0]);
        assert!((report.empirical_max - 0.3).abs() < 1e-12);
        assert!((report.fraction_positive - 0.5).abs() < 1e-12);
    }
}
