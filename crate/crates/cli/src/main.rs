//! `netconformal`: generate populations, draw samples, run conformal
//! prediction and coverage experiments, and inspect random-walk mixing.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "netconformal", version, about, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML or JSON config file (a previous run manifest is also accepted).
    #[arg(long, global = true, env = "NETCONF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true, env = "NETCONF_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "NETCONF_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "NETCONF_THREADS")]
    pub threads: Option<usize>,
    /// Start from the published experiment scale instead of desk scale.
    #[arg(long, global = true, env = "NETCONF_PAPER_SCALE")]
    pub paper_scale: bool,
    /// Format of tabular outputs.
    #[arg(long, global = true, env = "NETCONF_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a population: edge list, node table and manifest.
    Generate,
    /// Apply a selection rule or run a random walk on an edge list.
    Sample {
        /// Edge list (`src,dst`); overrides the config's `graph`.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Split conformal prediction on a selected sample of a user dataset.
    Predict {
        /// Edge list (`src,dst`); overrides the config's `graph`.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Node table (`node,y,x1..`); overrides the config's `nodes`.
        #[arg(long)]
        nodes: Option<PathBuf>,
    },
    /// Run a coverage experiment.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
    },
    /// Spectrum, eigengap, stationary law and TV mixing curve of a graph.
    Spectral {
        /// Edge list (`src,dst`); otherwise the config's graph or population.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Number of walk steps `T` in the TV curve.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a self-check suite; exits nonzero on any failure.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Add a selection rule that is not an invariant selector.
        #[arg(long)]
        inject_broken_selector: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Snowball,
    Walk,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Invariance,
    Exchangeability,
    Coverage,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
