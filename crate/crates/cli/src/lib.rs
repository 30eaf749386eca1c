//! Library surface of the experiment harness; the `deconv` binary is
//! a thin dispatcher over these modules, and the acceptance suite
//! drives the grid through them directly.

pub mod args;
pub mod commands;
pub mod config;
pub mod experiment;

use deconv_core::error::Result;

/// Runs one parsed command. `Ok(true)` signals partial grid failure
/// (exit code 2).
pub fn run(cli: &args::Cli) -> Result<bool> {
    match &cli.command {
        args::Command::Degrade(a) => commands::cmd_degrade(a).map(|_| false),
        args::Command::Solve(a) => commands::cmd_solve(a).map(|_| false),
        args::Command::Table(a) => commands::cmd_table(a),
        args::Command::Gradhist(a) => commands::cmd_gradhist(a).map(|_| false),
        args::Command::Curves(a) => commands::cmd_curves(a).map(|_| false),
        args::Command::Synth(a) => commands::cmd_synth(a).map(|_| false),
    }
}
