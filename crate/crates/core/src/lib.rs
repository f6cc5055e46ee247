//! Graph neural networks on COO graphs.

pub mod datasets;
pub mod error;
pub mod graph;
pub mod layers;
pub mod map_reduce;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
