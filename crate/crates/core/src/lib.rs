//! Harmonic approximations of inharmonic multi-sinusoidal signals.
//!
//! The crate computes the pseudo-true parameters of a harmonic (pitch) model
//! fitted to an inharmonic signal, the misspecified Cramér-Rao bounds on
//! their estimation variance, reference CRLBs for the harmonic and the
//! unstructured sinusoidal models, and per-harmonic MSE lower bounds. Monte
//! Carlo sweeps and a frame-based audio pipeline exercise the bounds against
//! maximum-likelihood estimators.

pub mod error;
pub mod model;
pub mod bounds;
pub mod estimators;
pub mod montecarlo;
mod linalg;
mod projection;
pub mod pseudo_true;
pub mod speech;

pub use error::{Error, Result};
