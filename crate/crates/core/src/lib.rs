//! Decentralized network estimation with learned time-varying mixing.

pub mod central;
pub mod error;
pub mod graph;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod local;
pub mod metrics;
pub mod diffusion;
pub mod scenario;
pub mod theory;

pub use error::{Error, Result};
