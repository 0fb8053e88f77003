//! Simulator and verification laboratory for the three-dimensional Prandtl
//! boundary-layer equations on T^2 x R+.
//!
//! The crate integrates the epsilon-regularized system forward in time,
//! computes weighted anisotropic Gevrey norms together with the full
//! hierarchy of auxiliary cancellation quantities, and certifies the derived
//! evolution equations, structural conditions and compatibility conditions
//! as numerical identities.
//!
//! Entry points:
//! - [`grid`]: discretization of the domain and the basic operators,
//! - [`state`]: velocity fields, derived quantities and data validation,
//! - [`solver`]: IMEX time integration,
//! - [`norms`]: Gevrey norms, radius estimation and elementary inequalities,
//! - [`aux`], [`structural`], [`repr`]: cutoffs, cancellation quantities,
//!   critical-curve detection and the tangential-derivative representation,
//! - [`verify`]: residual certification, manufactured solutions and the
//!   a-priori monitor,
//! - [`cli`]: the `simulate` / `verify` / `diagnose` command-line front end.

pub mod aux;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod mms;
pub mod norms;
pub mod repr;
pub mod solver;
pub mod spectral;
pub mod state;
pub mod structural;
pub mod verify;

pub use error::{Error, Result};
