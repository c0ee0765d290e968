//! Uniqueness certification and exact l0 recovery for sparse phase retrieval.
//!
//! Signals `x` are observed through phaseless measurements `y = |Ax|`. The
//! crate provides:
//!
//! - [`model`]: ensembles, sparse vectors, phase patterns, the measurement operator.
//! - [`numerics`]: rank, least squares, Hermitian eigen and null-space kernels.
//! - [`distance`]: the phase-generalized minimum distance of a real matrix,
//!   spark checks and uniqueness certificates.
//! - [`solver_real`]: exhaustive l0 recovery over the reals.
//! - [`solver_complex`]: l0 recovery over the complex field by rank-one lifting.
//! - [`experiments`]: recovery-rate sweeps, collision construction and
//!   certificate cross-checks.
//! - [`format`]: the plain-text matrix and vector file formats.

pub mod distance;
pub mod error;
pub mod experiments;
pub mod format;
pub mod model;
pub mod numerics;
pub mod solution;
pub mod solver_complex;
pub mod solver_real;

pub use error::{Error, Result};
pub use model::{
    measure, phase_equivalent, Complex64, Field, MeasurementEnsemble, MeasurementVector, PhasePattern,
    SparseVector,
};
