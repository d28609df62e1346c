//! Command-line companion to `pram-core`: file formats, the simulation
//! lab, and the `pram` binary's argument handling.

pub mod cli;
pub mod error;
pub mod io;
pub mod simlab;

pub use error::{Error, Result};
