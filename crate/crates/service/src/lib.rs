//! HTTP API and command-line interface over the searchgym core.

pub mod api;
pub mod cli;
pub mod ops;
