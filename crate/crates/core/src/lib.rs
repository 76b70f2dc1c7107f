pub mod control;
pub mod doe;
pub mod error;
pub mod metrology;
pub mod nnet;
pub mod plant;
pub mod rng;
pub mod runtime;
pub mod stats;

pub use error::{Error, Result};
