//! IO, file formats, experiments, the CLI and the local HTTP service for
//! the `oime-core` converter.

pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod files;
pub mod repl;
pub mod service;
