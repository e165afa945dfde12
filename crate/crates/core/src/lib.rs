pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod model;
pub mod nn;
pub mod train;
pub mod weather;

pub use error::{Error, Result};
