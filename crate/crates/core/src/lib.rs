//! Numerical harmonic analysis for Schrödinger operators `L = −Δ + V` on the
//! Heisenberg group H^n.
//!
//! The crate is organized bottom-up:
//!
//! * [`hgroup`]: group law, Korányi geometry, box grids and ball quadrature.
//! * [`potential`]: potential models, reverse Hölder ratios, the critical radius ρ.
//! * [`heatkernel`]: the free heat kernel, group convolution and `e^{−sL}`.
//! * [`poisson`]: `e^{−s√L}` by subordination, Poisson kernel bounds.
//! * [`spaces`]: L^p norms, maximal functions, Hardy and BMO norms.
//! * [`fracint`]: the fractional integral `L^{−α/2}`.
//! * [`oracle`]: Monte Carlo cross-checks.
//! * [`harness`]: end-to-end verification experiments and reports.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fracint;
pub mod harness;
pub mod heatkernel;
pub mod hgroup;
pub mod oracle;
pub mod poisson;
pub mod potential;
pub mod quad;
pub mod spaces;

pub use error::{Error, Result};
