//! Numerical laboratory for the weakly coupled system of semilinear
//! structurally damped wave equations
//!
//! ```text
//! u_tt - Δu + (-Δ)^δ₁ u_t = |v|^p,    v_tt - Δv + (-Δ)^δ₂ v_t = |u|^q,
//! ```
//!
//! with effective damping δ₁, δ₂ ∈ [0, ½].
//!
//! The crate is organised by subsystem:
//!
//! * [`spectral`] periodic grids, unitary-scaled Fourier transforms and radial multipliers;
//! * [`kernels`] characteristic roots, exact propagator symbols, linear evolution and
//!   grid-free radial Sobolev norms;
//! * [`solver`] pseudospectral Duhamel integration of the coupled system and blow-up detection;
//! * [`rates`] closed-form decay exponents, solution-space weights and log-log fitting;
//! * [`atlas`] exact classification of parameter points against the existence and
//!   nonexistence conditions;
//! * [`testfn`] bracket weights, cutoffs, principal-value fractional Laplacian and the
//!   test-function functionals;
//! * [`cli_io`] configuration, CSV/JSON artifacts and the subcommand drivers.

pub mod atlas;
pub mod cli_io;
mod error;
pub mod exact;
pub mod kernels;
pub mod quadrature;
pub mod rates;
pub mod solver;
pub mod spectral;
pub mod testfn;

pub use error::{Error, Result};
