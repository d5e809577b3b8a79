//! Numerical laboratory for a stochastic Chafee–Infante equation with a
//! spatially heterogeneous potential on an interval with Dirichlet boundaries:
//!
//! ```text
//! du = (Δu − g(x)u + αu − u³) dt + σ dW,   x ∈ [0, L],   u(0) = u(L) = 0
//! ```
//!
//! The linear part `A = Δ − g` is a Schrödinger operator whose spectrum
//! controls everything of interest: the pitchfork bifurcation at `α = λ₁`,
//! the growth of tangent vectors (finite-time Lyapunov exponents), the
//! divergence of the linearized stationary variance as `α → λ₁⁻`
//! (early-warning signs), and the first-exit times of the noisy path from
//! fractional-Sobolev tubes around the deterministic solution.
//!
//! Module map:
//!
//! - [`spectral`] — grids, potentials, tridiagonal operators, eigenpairs.
//! - [`noise`] — Q-Wiener covariance specifications and increment sampling.
//! - [`dynamics`] — semi-implicit time stepping, steady states, synchronization.
//! - [`ftle`] — tangent bundles and finite-time Lyapunov exponent estimation.
//! - [`ews`] — analytic and empirical early-warning variance estimators.
//! - [`exit`] — fractional Sobolev norms and first-exit-time ensembles.
//! - [`stats`] — small statistical helpers shared by the estimators.
//!
//! The companion command-line tool (`hetci-cli`) drives experiment sweeps
//! from config files; the `book/` directory holds a guided tour whose code
//! snippets compile and run as doctests of this crate.

pub mod dynamics;
pub mod ews;
pub mod exit;
pub mod ftle;
pub mod noise;
pub mod spectral;
pub mod stats;

#[cfg(doctest)]
mod book;
