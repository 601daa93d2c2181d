//! Implicit MAP filtering.
//!
//! Bayesian filtering where the update step is `K` iterations of an ordinary
//! gradient-history optimizer (GD, Adagrad, Adadelta, RMSprop, Adam) on the
//! per-timestep negative log-likelihood, started from the propagated point
//! estimate. The crate also carries the classical filter suite used as
//! baselines (KF, EKF, IEKF, UKF, bootstrap PF), the gradient-descent/Kalman
//! equivalence results for the linear-Gaussian case, a small weight-space
//! filtering surrogate, and a seeded Monte-Carlo harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classical;
pub mod equivalence;
pub mod error;
pub mod estimates;
pub mod imap;
pub mod linalg;
pub mod models;
pub mod optimizers;
pub mod rng;
pub mod weightspace;

pub use error::{Error, Result};
pub use estimates::FilterRun;
pub use linalg::{Matrix, Vector};
pub use models::{StateSpaceModel, Trajectory};
pub use optimizers::{OptimizerKind, OptimizerSpec, OptimizerState};
