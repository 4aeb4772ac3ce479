//! Core of a declarative search gym: typed dataset, vector set and app
//! configs with content hashes, the vector/structured/lexical engines, a
//! selectivity-aware query router, checkpointed activation and a benchmark
//! harness.

pub mod app;
pub mod bench;
pub mod config;
pub mod docs;
pub mod embed;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod inverted;
pub mod router;
pub mod schema;
pub mod state;
pub mod vindex;

pub use error::{Error, Result, Violation};
