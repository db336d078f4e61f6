//! Config, file formats, parallel evaluation and the command verbs around
//! `brsmg-core`.

pub mod config;
mod error;
pub mod experiment;
pub mod formats;
pub mod gradcheck;
pub mod parallel;
pub mod seeds;

pub use error::{Error, Result};
