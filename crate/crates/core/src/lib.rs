pub mod data;
pub mod evaluation;
mod error;
pub mod model;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
