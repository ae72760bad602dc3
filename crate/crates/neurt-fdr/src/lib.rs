//! File formats, the benchmark harness and the `neurt-fdr` command line
//! on top of `neurt-fdr-core`.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod report;
pub mod svg;

pub use error::{Category, CliError, Result};

/// Package version, echoed into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
