//! Command-line front end for the `densitymap` library.
//!
//! [`execute`] runs a parsed command in-process; the binary only adds
//! logging setup and exit codes.

pub mod args;
pub mod config;
pub mod manifest;
pub mod pipeline;

use std::fmt;

pub use args::{Cli, Command};
pub use config::RunConfig;

/// Bad flags or flag combinations, reported before any work starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let (args, stage): (_, fn(&RunConfig) -> anyhow::Result<()>) = match &cli.command {
        Command::Geocode(a) => (a, pipeline::run_geocode),
        Command::Density(a) => (a, pipeline::run_density),
        Command::Render(a) => (a, pipeline::run_render),
        Command::Run(a) => (a, pipeline::run_all),
    };
    let cfg = RunConfig::from_args(args)?;
    stage(&cfg)
}

/// Parses `argv` (program name first) and runs it.
pub fn execute_args<I, T>(argv: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = Cli::try_parse_from(argv).map_err(|e| UsageError(e.to_string()))?;
    execute(&cli)
}
