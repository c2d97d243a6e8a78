//! Command-line frontend for `clmkl`: kernel files in, models, predictions
//! and reports out.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 training finished without
//! converging (the model is still written and flagged).

pub mod args;
pub mod commands;
pub mod config;
pub mod files;

use anyhow::Result;

use args::{Cli, Command};
pub use commands::Outcome;

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::ComputeKernels(a) => commands::compute_kernels(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Cv(a) => commands::cv(a),
        Command::Bound(a) => commands::bound(a),
    }
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
        }
    }
}
