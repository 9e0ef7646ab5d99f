//! Self-averaging bounds for random diffraction measures.
//!
//! The crate simulates random scatterers (random amplitudes or random
//! dislocations) on finite point sets, evaluates the finite-volume
//! autocorrelation functional applied to an observable, and checks the
//! universal large-deviation, Laplace-transform and central-limit bounds
//! by exact enumeration and Monte Carlo.
//!
//! Module map:
//!
//! * [`pointset`] finite point sets with a certified minimal distance
//! * [`scatterers`] finite-support site distributions and sampling
//! * [`observables`] test functions in k-space and their Fourier transforms
//! * [`norms`] discrete, seminorm and Sobolev-type norms plus domination checks
//! * [`correlation`] autocorrelation functionals, exact means and variances
//! * [`rates`] cluster-expansion constants and rate functions
//! * [`experiments`] the verification harness
//! * [`config`] JSON configuration documents shared with the CLI

pub mod config;
pub mod correlation;
pub mod error;
pub mod experiments;
pub mod norms;
pub mod observables;
pub mod pointset;
pub mod quadrature;
pub mod rates;
pub mod scatterers;
pub mod stats;

pub use error::{Error, Result};
