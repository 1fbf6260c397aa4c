//! Graph neural networks for vertex clustering and hierarchical graph
//! pooling, trained on the graph total variation of soft cluster
//! assignments. Built on a small reverse-mode differentiation core.

pub mod autodiff;
pub mod checks;
pub mod error;
pub mod graph;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
