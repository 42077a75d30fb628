//! Discretizations of the Langevin dynamics with exact Gaussian oracles.
//!
//! Sampling from ν = e^{-f} can be phrased as minimizing the relative
//! entropy H_ν(ρ) over probability measures, and the familiar samplers are
//! splitting schemes for that optimization problem. This crate implements
//! the particle-level schemes together with their closed-form Gaussian
//! counterparts, so every quantitative property — stationary laws, bias
//! scaling, contraction rates, integrator orders — can be checked exactly
//! at desk scale.
//!
//! The pieces:
//!
//! - [`measures`]: Gaussian W₂ (Bures), relative entropy, entropy, and
//!   relative Fisher information in closed form, plus the [`measures::Potential`]
//!   interface for targets.
//! - [`flows`]: one-step mean/covariance recursions for ULA, SLA, the
//!   forward/backward relative-entropy methods, and the FB/BF splittings on
//!   Gaussian targets, plus heat-flow and variance-flow maps.
//! - [`samplers`]: particle chains (ULA, SLA, Backward-Flow), the
//!   two-Gaussian mixture target with its scalar implicit step, and the
//!   synchronous-coupling runner.
//! - [`prox`]: the residual-certified proximal operator (I + ε∇f)⁻¹.
//! - [`integrators`]: affine step-map algebra on linear fields — adjoints,
//!   compositions, order estimation, composite limit points, and
//!   convergence-rate checks.
//! - [`metrics`]: empirical 1D W₂, Gaussian moment matching, bias-order
//!   slope fits.
//! - [`experiments`]: the declarative experiment runner behind the CLI.
//!
//! Runnable demonstrations of each capability live in `examples/`; the
//! `langevin-flows` binary drives the same experiments from JSON configs.

pub mod experiments;
pub mod flows;
pub mod integrators;
pub mod linalg;
pub mod measures;
pub mod metrics;
pub mod noise;
pub mod prox;
pub mod samplers;

pub use flows::{SchemeKind, StepSize};
pub use measures::{GaussianMeasure, GaussianPotential, Potential};
pub use noise::NoiseStream;
pub use samplers::{Ensemble, MixtureTarget, Stepper};
