//! Truncated bosonic Fock space over a finite set of one-particle modes.
//!
//! Position-space creation and annihilation operators become mode operators
//! through the plane-wave basis of a ring; every identity used downstream is
//! basis covariant.

pub mod basis;
pub mod krylov;
pub mod marginal;
pub mod modes;
pub mod operators;
pub mod sparse;
pub mod state;
pub mod weyl;

pub use basis::FockBasis;
pub use krylov::{evolve_state, KrylovOptions, KrylovReport};
pub use marginal::{one_particle_marginal, trace_distance, MarginalDensity};
pub use modes::{ModeHartreeFlow, ModeSet};
pub use operators::{annihilator, creator, dgamma, field_operator, hamiltonian, number_operator};
pub use sparse::{SparseOperator, Term};
pub use state::{factorized_state, FockVector};
pub use weyl::{weyl, WeylOperator};
