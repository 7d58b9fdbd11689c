//! Asynchronous distributed dual proximal gradient for clustered networks.

pub mod cli;
pub mod delay;
pub mod diagnostics;
pub mod error;
pub mod layout;
pub mod network;
pub mod operators;
pub mod oracle;
pub mod problem;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
