//! Quench dynamics of the periodic transverse-field Ising chain, with and
//! without dephasing in the instantaneous energy eigenbasis.
//!
//! The pipeline runs per-mode Bloch-vector dynamics in the even-parity
//! (antiperiodic) fermion sector, builds real-space fermion correlators,
//! turns them into spin observables through Pfaffians, and extracts
//! scaling exponents by a grid search over data-collapse fits. A dense
//! statevector / density-matrix engine and a Trotter circuit emitter
//! provide independent checks at small system sizes.

pub mod circuit;
pub mod collapse;
pub mod correlators;
pub mod error;
pub mod export;
pub mod mode_dynamics;
pub mod observables;
pub mod ode;
pub mod oracle;
pub mod pfaffian;
pub mod pipeline;
pub mod protocol;

pub use error::{Error, Result};
