//! Finite-volume laboratory for a two-species chemotaxis system with
//! Lotka–Volterra competitive kinetics,
//!
//! ```text
//! u_t = d1 Δu − χ1 ∇·(u ∇w) + μ1 u (1 − u − a1 v)
//! v_t = d2 Δv − χ2 ∇·(v ∇w) + μ2 v (1 − a2 u − v)
//!   0 = d3 Δw + α u + β v − γ w
//! ```
//!
//! on 1D intervals and 2D rectangles with no-flux boundaries. Setting
//! `d1 = d2 = 0` selects the hyperbolic (zero-diffusion) limit system.
//!
//! The crate provides:
//!
//! * [`grid`] — cell-centered fields, conservative difference operators,
//!   integrals and norms;
//! * [`elliptic`] — the quasi-static signal solve `(γ − d3 Δ)w = αu + βv`;
//! * [`dynamics`] — positivity-preserving explicit time integration with
//!   adaptive step control and numerical blow-up detection;
//! * [`regimes`] — closed-form parameter-region conditions, blow-up
//!   coefficient algebra, an initial-data criterion, and an ODE blow-up
//!   oracle;
//! * [`experiments`] — vanishing-diffusion sweeps, threshold searches,
//!   limit-system convergence studies, and blow-up probes.
//!
//! With the default `parallel` feature the per-cell kernels and experiment
//! sweeps run on rayon; disabling it selects sequential fallbacks with
//! bit-identical results.

pub mod dynamics;
pub mod elliptic;
pub mod exec;
pub mod experiments;
pub mod grid;
pub mod numeric;
pub mod regimes;

pub use dynamics::{ModelParams, RunResult, Simulation, State, StepControl, Termination};
pub use grid::{FaceField, Field, GridSpec};
