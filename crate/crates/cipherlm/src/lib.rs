//! Std companion to `cipherlm-core`: file formats, HTTP service and client, CLI.

pub mod cli;
pub mod client;
pub mod error;
pub mod io;
pub mod service;
pub mod toy;
pub mod wire;

pub use error::{Error, Result};
