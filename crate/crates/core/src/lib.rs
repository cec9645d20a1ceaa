//! Phase-space simulation and statistical validation of Gaussian boson
//! sampling with threshold detectors.
//!
//! The pipeline runs input state ([`states`]) → network ([`network`]) →
//! positive-P or diagonal-P ensemble ([`sampler`]) → grouped count
//! probabilities ([`gcp`]), with classical pattern generation in
//! [`faker`], chi-square / Z-score tests in [`stats`] and an exact
//! small-network reference in [`oracle`].

pub mod config;
pub mod error;
pub mod faker;
pub mod gcp;
pub mod io;
mod kernels;
pub mod network;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod states;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
