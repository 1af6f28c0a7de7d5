//! The `patexpand` command line: every subcommand is a thin wrapper over
//! the library crates.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

pub use args::{Cli, Command};
pub use error::{CliError, ExitKind};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest_cmd(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Expand(a) => commands::expand_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Serve(a) => commands::serve_cmd(a),
        Command::Votes(c) => commands::votes_cmd(c),
        Command::Report(a) => commands::report_cmd(a),
        Command::Fixture(a) => commands::fixture_cmd(a),
    }
}
