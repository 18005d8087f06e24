pub mod ansatz;
pub mod cli;
pub mod error;
pub mod format;
pub mod network;
pub mod operators;
pub mod oracle;
pub mod trainer;

pub use error::{Error, Result};
