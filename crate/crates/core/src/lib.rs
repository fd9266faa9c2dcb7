//! Classical shadow tomography for adaptive, non-i.i.d. quantum sources.
//!
//! The crate simulates randomized-measurement experiments in which the state
//! (or channel) prepared at each round may depend on the full outcome history,
//! and estimates time-averaged observables with a truncated-mean estimator
//! whose sample complexity is governed by the shadow norm.
//!
//! Modules:
//! - [`linalg`]: dense complex operators, Hermitian/density-matrix types
//! - [`pauli`]: Pauli strings, weighted Pauli sums, traceless decomposition
//! - [`clifford`]: single-qubit Clifford group and uniform n-qubit sampling
//! - [`povm`]: IC POVMs, frame superoperators, dual frames, shadow norms
//! - [`protocol`]: measurement protocols and per-round draws
//! - [`sources`]: history-dependent state sources and trajectories
//! - [`acquisition`]: the sequential measurement loop and record persistence
//! - [`estimators`]: truncated mean, thresholds, sample-size planning
//! - [`process`]: shadow process tomography via the Choi isomorphism

pub mod acquisition;
pub mod clifford;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod pauli;
pub mod povm;
pub mod process;
pub mod protocol;
pub mod sources;

pub use error::{Result, ShadowError};
