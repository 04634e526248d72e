pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod synth;
pub mod tcn;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
