//! Localization of text-to-SQL benchmarks with execution-preserving SQL
//! rewriting, plus the checks, sampling and metrics used to validate the
//! result.

pub mod catalog;
pub mod corpus;
#[cfg(feature = "sqlite")]
pub mod localize;
pub mod mapping;
pub mod metrics;
pub mod nl;
#[cfg(feature = "sqlite")]
pub mod pipeline;
pub mod ports;
#[cfg(feature = "sqlite")]
pub mod review;
pub mod sampling;
pub mod sql;
pub mod stats;
pub mod verify;
