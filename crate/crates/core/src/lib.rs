//! Spectral simulation of the Lie-Trotter splitting scheme for the linear
//! stochastic Cauchy problem `dU = AU dt + dW`, `U(0) = 0`, with a diagonal
//! analytic generator.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: generator spectrum, semigroup factors, fractional weights,
//!   noise admissibility and time grids.
//! - [`gamma`]: closed-form gamma-radonifying norms of the stochastic
//!   convolution operators (second moments via the Ito isometry).
//! - [`path`]: exactly coupled path sampling on a shared fine grid.
//! - [`norms`]: spectral, Hölder and spatial norms plus Monte Carlo moments.
//! - [`rates`]: sweeps over coarse resolutions and log-log rate fitting.
//! - [`counterexample`]: the dyadic shift construction on `L^q(R; l^p)` for
//!   which the scheme diverges.
//! - [`cli`]: configuration, dispatch and CSV/JSON output.

pub mod cli;
pub mod config;
pub mod counterexample;
pub mod error;
pub mod gamma;
pub mod norms;
pub mod path;
pub mod quad;
pub mod rates;
pub mod rng;
pub mod spectral;
mod sum;

pub use error::{Error, Result};
