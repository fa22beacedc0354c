//! Command-line front end for `bec-core`: `.blp` problem files, key/value
//! reports and the `bec` verbs.

pub mod blp;
pub mod commands;
pub mod example1;
pub mod fixtures;
pub mod report;

pub use blp::{digest, load_problem, parse_spec, read_problem, save_problem, save_spec, BlpError};
pub use commands::{execute, run, Cli, Exit, Failure, Outcome};
pub use report::{Report, ReportError};
