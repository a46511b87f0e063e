//! The `cgraar` command line: `simulate`, `reconstruct`, `ensemble` and
//! `evaluate`. Exit codes: 0 success, 2 usage, 3 empty selection, 4 data
//! format, 1 other failures.

mod args;
mod commands;
mod error;
mod output;

pub use args::{Cli, Command, ConfigFile, EnsembleArgs, EnsembleOnly, EvaluateArgs, RunArgs, SimulateArgs};
pub use error::CliError;
pub use output::{load_field, load_intensity, load_support, read_pgm, write_pgm};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(a.overlay(file.simulate)),
        Command::Reconstruct(a) => commands::reconstruct(a.overlay(file.run)),
        Command::Ensemble(a) => commands::ensemble(a.run.overlay(file.run), a.ensemble.overlay(file.ensemble)),
        Command::Evaluate(a) => commands::evaluate(a.overlay(file.evaluate)),
    }
}
