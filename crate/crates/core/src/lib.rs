pub mod error;
pub mod integrate;
pub mod math;
pub mod model;
pub mod quadrature;
pub mod sim;
pub mod dslt;
pub mod experiments;
pub mod cli;

pub use error::{Error, Result};
