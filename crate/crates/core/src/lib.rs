//! Hierarchical geographic gossip with affine updates on random geometric
//! graphs.

pub mod baselines;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod geometry;
pub mod hierarchy;
pub mod kernel;
pub mod rng;
pub mod routing;
pub mod verify;

pub use error::{Error, Result};
