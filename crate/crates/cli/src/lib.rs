//! File formats, bundled experiment instances and the experiment runner for
//! `convex-trials-core`. The `convex-trials` binary is a thin wrapper over
//! [`experiments`] and [`io`].

pub mod error;
pub mod experiments;
pub mod io;

pub use error::{CliError, CliResult};
