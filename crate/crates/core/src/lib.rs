pub mod ensemble;
pub mod error;
pub mod cli;
pub mod evaluation;
pub mod experts;
pub mod rng;
pub mod rollout;
pub mod session;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
