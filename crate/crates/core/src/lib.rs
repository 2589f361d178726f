//! Numerical laboratory for the semi-relativistic Hartree equation and its
//! many-body origin.
//!
//! The crate is split along the lines of the computation:
//!
//! - [`spectral_grid`]: periodic grids, FFT-based application of the
//!   relativistic dispersion `sqrt(1 - Δ)` and of (regularized) Coulomb
//!   convolutions.
//! - [`hartree`]: Strang-split time integration of the Hartree equation,
//!   conserved quantities, cutoff scans and blow-up monitoring.
//! - [`fock`]: truncated bosonic Fock space over a finite mode set, sparse
//!   second-quantized operators, Weyl operators, Krylov propagation and
//!   one-particle marginals.
//! - [`laguerre`]: exact and high-precision sector projection coefficients of
//!   Weyl-displaced factorized states.
//! - [`fluctuation`]: fluctuation generators around the Hartree flow, the
//!   fluctuation dynamics, parity and error-term diagnostics.
//! - [`experiments`]: configuration, rate fitting and the experiment drivers
//!   behind the `relhartree` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fluctuation;
pub mod fock;
pub mod hartree;
pub mod laguerre;
mod quadrature;
pub mod spectral_grid;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
