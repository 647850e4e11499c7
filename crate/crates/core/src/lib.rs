//! Differential geometry of neural-network error surfaces under L2 and KL
//! regularization sweeps.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changepoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod network;
pub mod optimize;
pub mod plot;
pub mod rng;

pub use error::{Error, Result};
