//! Library side of the `platoon` binary: settings resolution and the
//! five commands, each writing CSV files with a config header and a JSON
//! manifest into the output directory.

pub mod commands;
pub mod config;

pub use commands::{Failure, PolicyKind};
pub use config::{CommonArgs, Settings};
