//! Numerical laboratory for the advection + p-Laplacian equation
//!
//!   d theta/dt + u . grad theta = nu div(|grad theta|^{p-2} grad theta),   p > 2
//!
//! on the periodic torus `[0,1]^d` (d = 1, 2). The crate measures the nonlinear
//! dissipation time kappa_d under mixing flows and evaluates the closed-form
//! bounds, decay envelopes and iteration algebra that control it: the trivial
//! bound 1/(nu lambda_1^{p/2}), the nonlinear Gronwall envelope, the
//! transport-comparison estimate, the frequency thresholds H1/H2 with their
//! companions script-H, the closed-form scaling exponents delta, and the rational
//! iteration maps F_a.
//!
//! Module map:
//! - [`grid`]: periodic grids and mean-zero scalar fields with cached spectra
//! - [`spectral`]: Sobolev norms, eigenvalue tables, projections, Weyl counting
//! - [`flows`]: the incompressible velocity-field zoo and particle tracing
//! - [`transport`]: semi-Lagrangian solution of the inviscid transport equation
//! - [`solver`]: explicit finite-volume p-Laplacian stepping with Strang splitting
//! - [`mixing`]: mixing-rate measurement, rate-function fits, mixing verification
//! - [`bounds`]: every closed-form constant, threshold and envelope
//! - [`lab`]: experiment orchestration, kappa_d measurement, sweeps, persistence

// validation uses `!(x > 0.0)` so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod flows;
pub mod grid;
pub mod lab;
pub mod mixing;
pub mod record;
pub mod solver;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField};
