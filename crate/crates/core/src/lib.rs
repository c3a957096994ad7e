pub mod agents;
pub mod demos;
pub mod envs;
pub mod error;
pub mod exploration;
pub mod grl;
pub mod harness;
pub mod nn;

pub use error::{Error, Result};
