//! Library backing the `poarx` binary: configuration schema, CSV dataset
//! I/O, report documents, and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
