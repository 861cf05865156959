//! Layer-wise mutual information probing of toy selective state-space
//! encoders.
//!
//! The crate trains small bidirectional selective-scan encoders on synthetic
//! reconstruction and frame-classification tasks, estimates the mutual
//! information between local input features and every layer's
//! representation with a Donsker–Varadhan neural estimator, and classifies
//! the shape of the resulting MI-versus-depth curve.

pub mod error;
pub mod experiment;
pub mod mine;
pub mod models;
pub mod nn;
pub mod probe;
pub mod seeds;
pub mod ssm;

pub use error::{Error, Result};
