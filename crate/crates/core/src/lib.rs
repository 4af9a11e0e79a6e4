pub mod analysis;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor, Var};
