//! Command-line front end for packenc: attention scaling benchmarks,
//! invariant suites, packing inspection and a toy contrastive run. Every
//! command produces a [`Report`](report::Report); the process exits 0 iff
//! every check in it passes.

pub mod bench;
pub mod commands;
pub mod error;
pub mod inspect;
pub mod report;
pub mod suites;
pub mod train;

pub use commands::{run, Cli, Command};
pub use error::{Error, Result};
pub use report::{Metric, Report};
