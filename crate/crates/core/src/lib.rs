//! Graph memory network for node classification on heterophilous graphs.

pub mod error;
pub mod graph;
pub mod tensor;

pub use error::{Error, Result};
pub mod memory;
pub mod model;
pub mod stats;
