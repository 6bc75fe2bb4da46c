//! Command-line front end: argument parsing, subcommand execution, and the
//! JSON/CSV/manifest output contract.

pub mod args;
pub mod output;
pub mod run;

pub use args::Cli;
pub use run::run;
