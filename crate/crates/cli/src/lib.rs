//! Pipeline behind the `mutcon` binary: ingest prediction files, build the
//! consistency matrix, run estimators and protocols, and write report
//! bundles.

pub mod bundle;
pub mod commands;
pub mod config;
mod error;
pub mod evaluate;
pub mod ingest;

pub use error::{CliError, ParseErrorKind, Result};
