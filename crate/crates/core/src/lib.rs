//! Manifold-restricted one-sample inference on random dot product graphs.
//!
//! Latent positions are drawn from a one-dimensional curve, estimated by
//! adjacency spectral embedding, and the curve is learnt back from the
//! estimates with an Isomap variant that embeds shortest-path distances by
//! raw-stress minimization. Three test statistics are compared by Monte
//! Carlo power simulation.

pub mod cli;
pub mod config;
pub mod curve;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod montecarlo;
pub mod rdpg;

pub use error::{Error, ErrorCategory, Result};
