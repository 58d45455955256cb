mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpforge::analog_map::CellLibrary;

use config::{Opts, RunConfig};

/// Synthesizes margin-propagation analog circuits from factor graphs.
///
/// The cell library is read from $MPFORGE_CELL_LIB when set.
#[derive(Parser, Debug)]
#[command(name = "mpforge", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the pipeline on a .bn, .alist or .weights file up to --stage
    Synth(Opts),
    /// Synthesize an LDPC decoder and sweep its bit error rate
    Ldpc(Opts),
    /// Evaluate a feed-forward network through its synthesized netlist
    Ann(Opts),
    /// Answer a Bayesian-network query through the full pipeline
    Query(Opts),
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let (opts, f): (Opts, fn(&RunConfig, &CellLibrary) -> anyhow::Result<String>) = match cli.cmd {
        Cmd::Synth(o) => (o, commands::synth),
        Cmd::Ldpc(o) => (o, commands::ldpc),
        Cmd::Ann(o) => (o, commands::ann),
        Cmd::Query(o) => (o, commands::query),
    };
    let cfg = RunConfig::resolve(opts)?;
    let lib = CellLibrary::load()?;
    f(&cfg, &lib)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mpforge: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
