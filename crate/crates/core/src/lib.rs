pub mod basis;
pub mod data;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod reference;
pub mod scoring;
pub mod simharness;
pub mod sampler;

pub use error::{BctmError, Result};
