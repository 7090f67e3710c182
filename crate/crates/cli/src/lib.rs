//! Command-line driver and end-to-end experiments for `gslang-core`.

pub mod commands;
pub mod experiments;

pub use commands::{init_threads, run, Cli};
