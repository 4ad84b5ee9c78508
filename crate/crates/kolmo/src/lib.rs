//! File formats, the verification suite runner and the `kolmo` command line
//! on top of [`kolmo_core`].
//!
//! * [`problem_file`]: TOML problem descriptions.
//! * [`table`]: grid, field and path CSV files.
//! * [`report`]: JSON records for estimates, norms and suite runs.
//! * [`cli`]: the `kolmo` subcommands.

pub mod cli;
pub mod error;
pub mod problem_file;
pub mod report;
pub mod table;

pub use error::{Error, Result};
