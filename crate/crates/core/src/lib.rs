//! Desk-scale numerical laboratory for stochastic evolution equations driven by
//! cylindrical Lévy noise.
//!
//! The library works on finite truncations of a separable Hilbert space: states live in
//! `R^d_H`, noise directions in `R^d_U`, and every path is a càdlàg step function on a
//! finite time grid. On that desk scale the main objects become exact finite sums:
//!
//! - [`noise`] — cylindrical Lévy noise models (Brownian with covariance `Q`, independent
//!   symmetric α-stable coordinates, `U`-valued compound Poisson), their characteristic
//!   functions, deterministic counter-based increment sampling, and the integrability
//!   functionals `ζ_L`, `η_L`, `m_L`.
//! - [`path`] — grid paths, step-process integrands, stochastic and weighted Lebesgue
//!   integrals, quadratic variation and covariation, stopping and windowing.
//! - [`metrics`] — Monte-Carlo estimators for the uniform-convergence-in-probability
//!   distance `d_ucp` and the Émery-style semimartingale distances `d_em` / `ρ_em`,
//!   with identity / random / greedy adversary strategies and an exact sign-enumeration
//!   oracle for scalar problems.
//! - [`solver`] — the mild-solution fixed-point map `Λ`, an adaptive Euler–Peano scheme
//!   with stopping-time updates, Picard iteration as an independent route to the fixed
//!   point, and convergence / uniqueness studies.
//! - [`gronwall`] — the pathwise logarithmic Grönwall inequality for strictly positive
//!   grid paths and a ucp-convergence experiment for kernel-damped feedback systems.
//!
//! All numeric code is generic over the scalar type via [`Real`]; the crate root exports
//! `f64` aliases ([`TruncatedVector64`], [`GridPath64`], ...) which are what the CLI and
//! every shipped tolerance use.

// Validations are written `!(x > 0)` rather than `x <= 0` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod grid;
pub mod gronwall;
pub mod hilbert;
pub mod metrics;
pub mod noise;
pub mod path;
pub mod real;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` state vector in the truncated state space `R^d_H`.
pub type TruncatedVector64 = hilbert::TruncatedVector<f64>;
/// `f64` Hilbert–Schmidt operator between truncations.
pub type HsOperator64 = hilbert::HsOperator<f64>;
/// `f64` diagonal contraction semigroup.
pub type ContractionSemigroup64 = hilbert::ContractionSemigroup<f64>;
/// `f64` time grid.
pub type TimeGrid64 = grid::TimeGrid<f64>;
/// `f64` vector-valued grid path.
pub type GridPath64 = path::GridPath<f64>;
/// `f64` real-valued grid path.
pub type RealGridPath64 = path::RealGridPath<f64>;
/// `f64` noise model.
pub type NoiseModel64 = noise::NoiseModel<f64>;
/// `f64` sampled noise increment bundle.
pub type NoisePathBundle64 = noise::NoisePathBundle<f64>;
/// `f64` mild-solution problem description.
pub type SdeProblem64 = solver::SdeProblem<f64>;
