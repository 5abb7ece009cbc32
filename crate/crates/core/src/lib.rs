//! Semi-discrete optimal transport on power diagrams, and the capacity-constrained
//! clustering built on it.

pub mod adaptation;
mod balance;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod io;
pub mod measure;
pub mod power_diagram;
pub mod vot;

pub use error::{Error, Result};
