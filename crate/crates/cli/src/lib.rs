//! Library surface of the CLI: configuration, the pipeline commands, and
//! nothing else. The binary in `main.rs` is a thin clap wrapper over these.

pub mod commands;
pub mod config;
