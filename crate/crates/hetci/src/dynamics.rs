//! Time stepping for the nonlinear SPDE, its linearization and first
//! variation, plus deterministic steady states and shared-noise
//! synchronization diagnostics.
//!
//! The scheme treats the stiff linear operator implicitly and the cubic and
//! noise terms explicitly: one tridiagonal solve
//! `(I − A_α dt) u_{n+1} = u_n − u_n³ dt + σ ΔW_n` per step. For constant `α`
//! the factorization is computed once; a drifting `α` rebuilds it whenever
//! the value actually changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{CovarianceSpec, NoiseSampler, RngStream};
use crate::spectral::{
    build_schrodinger, dot_dx, eigendecompose, Grid, Potential, SpectralError,
    TridiagonalOperator,
};

/// Any grid value beyond this magnitude is treated as a blow-up of the
/// explicit cubic term and aborts the run with diagnostics.
pub const BLOW_UP_LIMIT: f64 = 1e6;

const NEWTON_RESIDUAL_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERATIONS: usize = 200;
const NEWTON_MAX_HALVINGS: usize = 30;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("tridiagonal system is numerically singular")]
    SingularSystem,
    #[error("field blew up at step {step}: max |u| = {max_abs:.3e}")]
    BlowUp { step: usize, max_abs: f64 },
    #[error("step {step} failed: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Interior field values with their time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(values: Vec<f64>, t: f64) -> Self {
        Self { values, t }
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.n()],
            t: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Parameter path `α(t)`: constant, or a clipped linear ramp
/// `α(t) = min(α₀ + ε t, α_max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Constant { alpha: f64 },
    Ramp { alpha0: f64, eps: f64, alpha_max: f64 },
}

impl DriftSpec {
    pub fn alpha_at(&self, t: f64) -> f64 {
        match self {
            DriftSpec::Constant { alpha } => *alpha,
            DriftSpec::Ramp {
                alpha0,
                eps,
                alpha_max,
            } => (alpha0 + eps * t).min(*alpha_max),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DriftSpec::Constant { .. })
    }

    /// Largest value attained on `[0, horizon]`; the ramp is nondecreasing.
    pub fn max_alpha(&self, horizon: f64) -> f64 {
        self.alpha_at(horizon)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if let DriftSpec::Ramp { eps, .. } = self {
            if !(*eps >= 0.0) {
                return Err(DynamicsError::Config(format!(
                    "ramp rate must be nonnegative, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Stepping parameters shared by every integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub nt: usize,
    pub sigma: f64,
    /// Record every `snapshot_stride`-th step (plus the initial state).
    pub snapshot_stride: usize,
    /// Steps discarded before statistics are taken.
    pub burn_in: usize,
}

impl SimConfig {
    pub fn new(dt: f64, nt: usize, sigma: f64) -> Result<Self, DynamicsError> {
        let cfg = Self {
            dt,
            nt,
            sigma,
            snapshot_stride: 1,
            burn_in: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.nt as f64
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.nt == 0 {
            return Err(DynamicsError::Config("nt must be at least 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(DynamicsError::Config(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(DynamicsError::Config(
                "snapshot_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A recorded trajectory: strided snapshots plus seed and config provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub master_seed: u64,
    pub stream_index: u64,
    pub config: SimConfig,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(t, _)| *t).collect()
    }

    pub fn final_state(&self) -> &(f64, Vec<f64>) {
        self.snapshots
            .last()
            .expect("records hold at least the initial state")
    }

    /// Snapshots admissible for statistics: the initial state and everything
    /// recorded during the first `burn_in` steps are excluded.
    pub fn statistics_window(&self) -> &[(f64, Vec<f64>)] {
        let stride = self.config.snapshot_stride;
        let mut start = self.snapshots.len();
        for i in 0..self.snapshots.len() {
            if i >= 1 && i * stride > self.config.burn_in {
                start = i;
                break;
            }
        }
        &self.snapshots[start..]
    }

    pub fn norm_series(&self, grid: &Grid) -> Vec<(f64, f64)> {
        self.snapshots
            .iter()
            .map(|(t, u)| (*t, dot_dx(u, u, grid.dx()).sqrt()))
            .collect()
    }
}

/// Factored resolvent `(I − dt·T)^{-1}` of a tridiagonal operator, solved by
/// the Thomas algorithm. The systems arising here are strictly diagonally
/// dominant for all sane `α·dt`, so no pivoting is performed; loss of
/// dominance surfaces as a singularity error at construction.
#[derive(Clone, Debug)]
pub struct SemiImplicitSolver {
    sub: Vec<f64>,
    inv_denom: Vec<f64>,
    upper: Vec<f64>,
    dt: f64,
    n: usize,
}

impl SemiImplicitSolver {
    pub fn new(a_alpha: &TridiagonalOperator, dt: f64) -> Result<Self, DynamicsError> {
        let n = a_alpha.n();
        let diag: Vec<f64> = a_alpha.diag().iter().map(|d| 1.0 - dt * d).collect();
        let off: Vec<f64> = a_alpha.off().iter().map(|e| -dt * e).collect();

        let scale = diag.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let tiny = 1e3 * f64::EPSILON * scale;

        let mut inv_denom = Vec::with_capacity(n);
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut denom = diag[0];
        if denom.abs() < tiny {
            return Err(DynamicsError::SingularSystem);
        }
        inv_denom.push(1.0 / denom);
        for i in 1..n {
            upper[i - 1] = off[i - 1] / denom;
            denom = diag[i] - off[i - 1] * upper[i - 1];
            if denom.abs() < tiny {
                return Err(DynamicsError::SingularSystem);
            }
            inv_denom.push(1.0 / denom);
        }

        Ok(Self {
            sub: off,
            inv_denom,
            upper,
            dt,
            n,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.n);
        rhs[0] *= self.inv_denom[0];
        for i in 1..self.n {
            rhs[i] = (rhs[i] - self.sub[i - 1] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..self.n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }

    /// Advances the nonlinear field in place:
    /// `(I − A_α dt) u_next = u − u³ dt + σ·noise_inc`.
    pub fn advance_nonlinear(
        &self,
        state: &mut FieldState,
        noise_inc: &[f64],
        sigma: f64,
    ) -> Result<(), DynamicsError> {
        if state.values.len() != self.n || noise_inc.len() != self.n {
            return Err(DynamicsError::Dimension {
                expected: self.n,
                got: state.values.len().min(noise_inc.len()),
            });
        }
        for (x, inc) in state.values.iter_mut().zip(noise_inc) {
            let v = *x;
            *x = v - v * v * v * self.dt + sigma * inc;
        }
        self.solve_in_place(&mut state.values);
        state.t += self.dt;
        check_field(&state.values)
    }

    /// Advances the linearized field (no cubic term) in place.
    pub fn advance_linear(
        &self,
        state: &mut FieldState,
        noise_inc: &[f64],
        sigma: f64,
    ) -> Result<(), DynamicsError> {
        if state.values.len() != self.n || noise_inc.len() != self.n {
            return Err(DynamicsError::Dimension {
                expected: self.n,
                got: state.values.len().min(noise_inc.len()),
            });
        }
        for (x, inc) in state.values.iter_mut().zip(noise_inc) {
            *x += sigma * inc;
        }
        self.solve_in_place(&mut state.values);
        state.t += self.dt;
        check_field(&state.values)
    }

    /// Advances a first-variation (tangent) field along a base state `u`:
    /// `(I − A_α dt) v_next = v − 3 u² v dt`, no noise.
    pub fn advance_variation(
        &self,
        tangent: &mut [f64],
        base: &[f64],
    ) -> Result<(), DynamicsError> {
        if tangent.len() != self.n || base.len() != self.n {
            return Err(DynamicsError::Dimension {
                expected: self.n,
                got: tangent.len().min(base.len()),
            });
        }
        for (v, u) in tangent.iter_mut().zip(base) {
            *v -= 3.0 * u * u * *v * self.dt;
        }
        self.solve_in_place(tangent);
        check_field(tangent)
    }
}

fn check_field(u: &[f64]) -> Result<(), DynamicsError> {
    let mut max_abs = 0.0f64;
    for &x in u {
        if !x.is_finite() {
            return Err(DynamicsError::BlowUp {
                step: 0,
                max_abs: f64::INFINITY,
            });
        }
        max_abs = max_abs.max(x.abs());
    }
    if max_abs > BLOW_UP_LIMIT {
        return Err(DynamicsError::BlowUp { step: 0, max_abs });
    }
    Ok(())
}

fn annotate(err: DynamicsError, step: usize) -> DynamicsError {
    match err {
        DynamicsError::BlowUp { max_abs, .. } => DynamicsError::BlowUp { step, max_abs },
        other => DynamicsError::AtStep {
            step,
            source: Box::new(other),
        },
    }
}

/// One semi-implicit step of the nonlinear equation. The operator must be
/// built at the current `α(t)`; `noise_inc` already carries its `√dt` factor
/// and is scaled by `sigma` here.
pub fn step_semi_implicit(
    state: &FieldState,
    a_alpha: &TridiagonalOperator,
    dt: f64,
    noise_inc: &[f64],
    sigma: f64,
) -> Result<FieldState, DynamicsError> {
    let solver = SemiImplicitSolver::new(a_alpha, dt)?;
    let mut next = state.clone();
    solver.advance_nonlinear(&mut next, noise_inc, sigma)?;
    Ok(next)
}

/// One first-variation step along the base state `u`.
pub fn step_first_variation(
    v: &FieldState,
    u: &FieldState,
    a_alpha: &TridiagonalOperator,
    dt: f64,
) -> Result<FieldState, DynamicsError> {
    let solver = SemiImplicitSolver::new(a_alpha, dt)?;
    let mut next = v.clone();
    solver.advance_variation(&mut next.values, &u.values)?;
    next.t += dt;
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
fn integrate_inner(
    u0: &FieldState,
    g: &Potential,
    drift: &DriftSpec,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    grid: &Grid,
    rng: &mut RngStream,
    cubic: bool,
) -> Result<TrajectoryRecord, DynamicsError> {
    cfg.validate()?;
    drift.validate()?;
    if u0.values.len() != grid.n() {
        return Err(DynamicsError::Dimension {
            expected: grid.n(),
            got: u0.values.len(),
        });
    }

    let sampler = NoiseSampler::new(spec, grid);
    let mut inc = vec![0.0; grid.n()];
    let mut coeff = vec![0.0; spec.modes()];

    let t0 = u0.t;
    let mut state = u0.clone();
    let mut alpha = drift.alpha_at(t0);
    let mut solver = SemiImplicitSolver::new(&build_schrodinger(grid, g, alpha)?, cfg.dt)?;

    let mut snapshots = Vec::with_capacity(cfg.nt / cfg.snapshot_stride + 1);
    snapshots.push((t0, state.values.clone()));

    for step in 0..cfg.nt {
        let t = t0 + step as f64 * cfg.dt;
        if !drift.is_constant() {
            let a = drift.alpha_at(t);
            if a != alpha {
                alpha = a;
                solver = SemiImplicitSolver::new(&build_schrodinger(grid, g, alpha)?, cfg.dt)
                    .map_err(|e| annotate(e, step))?;
            }
        }
        sampler.sample_with_scratch(cfg.dt, rng, &mut inc, &mut coeff);
        let advanced = if cubic {
            solver.advance_nonlinear(&mut state, &inc, cfg.sigma)
        } else {
            solver.advance_linear(&mut state, &inc, cfg.sigma)
        };
        advanced.map_err(|e| annotate(e, step))?;
        state.t = t0 + (step + 1) as f64 * cfg.dt;
        if (step + 1) % cfg.snapshot_stride == 0 {
            snapshots.push((state.t, state.values.clone()));
        }
    }

    Ok(TrajectoryRecord {
        snapshots,
        master_seed: rng.master_seed(),
        stream_index: rng.stream_index(),
        config: cfg.clone(),
    })
}

/// Integrates the nonlinear SPDE over `cfg.nt` steps with fresh noise
/// increments from `rng`. Constant drift factors the resolvent once; a ramp
/// rebuilds it whenever `α(t)` changes.
pub fn integrate_sde(
    u0: &FieldState,
    g: &Potential,
    drift: &DriftSpec,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    grid: &Grid,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord, DynamicsError> {
    integrate_inner(u0, g, drift, spec, cfg, grid, rng, true)
}

/// Integrates the linearized equation (cubic term dropped) at constant `α`.
/// Stationary statistics require `α < λ₁`; this is not enforced.
pub fn integrate_linear(
    w0: &FieldState,
    g: &Potential,
    alpha: f64,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    grid: &Grid,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord, DynamicsError> {
    integrate_inner(
        w0,
        g,
        &DriftSpec::Constant { alpha },
        spec,
        cfg,
        grid,
        rng,
        false,
    )
}

/// Initial datum "close to the null function": zero plus one noise increment
/// scaled by `sigma`, the convention used by the replication runs.
pub fn noisy_null_state(
    spec: &CovarianceSpec,
    grid: &Grid,
    dt: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> FieldState {
    let inc = crate::noise::sample_increment(spec, grid, dt, rng);
    FieldState::new(inc.iter().map(|x| sigma * x).collect(), 0.0)
}

/// Energy functional `F_L(u) = ½⟨−A u, u⟩_dx` for `a` holding the operator
/// `A` built with `alpha = 0`; non-increasing along noiseless trajectories
/// for `α < λ₁`.
pub fn lyapunov_energy(u: &[f64], a: &TridiagonalOperator, grid: &Grid) -> f64 {
    let mut au = vec![0.0; u.len()];
    a.apply(u, &mut au);
    -0.5 * dot_dx(&au, u, grid.dx())
}

/// Steady states found by damped Newton from the seeds `{0, ±c·e₁}`.
#[derive(Clone, Debug)]
pub struct SteadyStates {
    /// Converged, pairwise distinct states (‖·‖_dx distance > 1e−6).
    pub states: Vec<Vec<f64>>,
    /// Human-readable reports for seeds whose iteration did not converge.
    pub failures: Vec<String>,
}

/// Finds steady states of `A_α u = u³` near the first branch (`α < λ₂`).
///
/// Newton iterations use the tridiagonal Jacobian `A_α − 3 diag(u²)` with a
/// pivoted solve and residual backtracking; convergence is declared at
/// `‖A_α u − u³‖_dx ≤ 1e−10`. The seed amplitude is
/// `c = max(0.1, sqrt(max(α − λ₁, 0)))`.
pub fn find_steady_states(
    g: &Potential,
    alpha: f64,
    grid: &Grid,
) -> Result<SteadyStates, DynamicsError> {
    let a_alpha = build_schrodinger(grid, g, alpha)?;
    let a0 = build_schrodinger(grid, g, 0.0)?;
    let basis = eigendecompose(&a0, 1, grid)?;
    let lambda1 = basis.lambda(1);
    let c = (alpha - lambda1).max(0.0).sqrt().max(0.1);

    let n = grid.n();
    let plus: Vec<f64> = basis.eigenvector(1).iter().map(|e| c * e).collect();
    let minus: Vec<f64> = plus.iter().map(|x| -x).collect();
    let seeds: Vec<(&str, Vec<f64>)> =
        vec![("zero", vec![0.0; n]), ("+c*e1", plus), ("-c*e1", minus)];

    let residual = |u: &[f64], out: &mut Vec<f64>| {
        out.resize(n, 0.0);
        a_alpha.apply(u, out);
        for (f, x) in out.iter_mut().zip(u) {
            *f -= x * x * x;
        }
    };

    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut failures = Vec::new();
    for (label, mut u) in seeds {
        let mut f = Vec::new();
        residual(&u, &mut f);
        let mut res = dot_dx(&f, &f, grid.dx()).sqrt();
        let mut converged = res <= NEWTON_RESIDUAL_TOL;
        let mut iterations = 0;
        while !converged && iterations < NEWTON_MAX_ITERATIONS {
            iterations += 1;
            let jac_diag: Vec<f64> = a_alpha
                .diag()
                .iter()
                .zip(&u)
                .map(|(d, x)| d - 3.0 * x * x)
                .collect();
            let lu = crate::spectral::PivotedTridiagonalLu::factor(
                a_alpha.off(),
                &jac_diag,
                a_alpha.off(),
            );
            let mut delta: Vec<f64> = f.iter().map(|x| -x).collect();
            lu.solve_in_place(&mut delta);

            let mut step_scale = 1.0;
            let mut accepted = false;
            let mut trial = vec![0.0; n];
            let mut f_trial = Vec::new();
            for _ in 0..=NEWTON_MAX_HALVINGS {
                for ((t, x), d) in trial.iter_mut().zip(&u).zip(&delta) {
                    *t = x + step_scale * d;
                }
                residual(&trial, &mut f_trial);
                let res_trial = dot_dx(&f_trial, &f_trial, grid.dx()).sqrt();
                if res_trial.is_finite() && res_trial < res {
                    u.copy_from_slice(&trial);
                    f.clone_from(&f_trial);
                    res = res_trial;
                    accepted = true;
                    break;
                }
                step_scale *= 0.5;
            }
            if !accepted {
                break;
            }
            converged = res <= NEWTON_RESIDUAL_TOL;
        }

        if !converged {
            failures.push(format!(
                "seed {label}: residual {res:.3e} after {iterations} iterations"
            ));
            continue;
        }
        let distinct = states.iter().all(|s| {
            let d2: f64 = s
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * grid.dx();
            d2.sqrt() > 1e-6
        });
        if distinct {
            states.push(u);
        }
    }

    Ok(SteadyStates { states, failures })
}

/// Gap series `‖u_a(t) − u_b(t)‖_dx` for two initial states driven by the
/// identical noise path (both runs consume the same increments in lockstep).
#[allow(clippy::too_many_arguments)]
pub fn synchronization_gap(
    u0_a: &FieldState,
    u0_b: &FieldState,
    g: &Potential,
    drift: &DriftSpec,
    spec: &CovarianceSpec,
    cfg: &SimConfig,
    grid: &Grid,
    rng: &mut RngStream,
) -> Result<Vec<(f64, f64)>, DynamicsError> {
    cfg.validate()?;
    let sampler = NoiseSampler::new(spec, grid);
    let mut inc = vec![0.0; grid.n()];
    let mut coeff = vec![0.0; spec.modes()];

    let mut a = u0_a.clone();
    let mut b = u0_b.clone();
    let t0 = a.t;
    let mut alpha = drift.alpha_at(t0);
    let mut solver = SemiImplicitSolver::new(&build_schrodinger(grid, g, alpha)?, cfg.dt)?;

    let gap = |a: &FieldState, b: &FieldState| {
        let d2: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            * grid.dx();
        d2.sqrt()
    };

    let mut series = vec![(t0, gap(&a, &b))];
    for step in 0..cfg.nt {
        let t = t0 + step as f64 * cfg.dt;
        if !drift.is_constant() {
            let new_alpha = drift.alpha_at(t);
            if new_alpha != alpha {
                alpha = new_alpha;
                solver = SemiImplicitSolver::new(&build_schrodinger(grid, g, alpha)?, cfg.dt)?;
            }
        }
        sampler.sample_with_scratch(cfg.dt, rng, &mut inc, &mut coeff);
        solver
            .advance_nonlinear(&mut a, &inc, cfg.sigma)
            .map_err(|e| annotate(e, step))?;
        solver
            .advance_nonlinear(&mut b, &inc, cfg.sigma)
            .map_err(|e| annotate(e, step))?;
        a.t = t0 + (step + 1) as f64 * cfg.dt;
        b.t = a.t;
        if (step + 1) % cfg.snapshot_stride == 0 {
            series.push((a.t, gap(&a, &b)));
        }
    }
    Ok(series)
}
