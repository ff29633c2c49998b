//! Command-line parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mime_core::cost::TaskMode;

use crate::commands;
use crate::config::{ExperimentConfig, Overrides};
use crate::error::CliResult;
use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "mime", version, about = "Threshold-gated multi-task inference experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Storage of n child tasks: conventional vs shared weights plus thresholds.
    Storage(Common),
    /// Per-layer energy of each inference case.
    Energy(Common),
    /// Per-layer throughput relative to dense inference.
    Throughput(Common),
    /// Hardware variants and the weight-pruned baseline.
    Ablate(Common),
    /// Train the parent, per-task thresholds and fine-tuned baselines.
    Train(Common),
    /// Measure a checkpoint's sparsity, or print the reference tables.
    Sparsity(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Singular,
    Pipelined,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON). Defaults apply to every missing field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PE array size.
    #[arg(long)]
    pub pe: Option<u64>,
    /// Size of each on-chip cache in KiB.
    #[arg(long = "cache-kb")]
    pub cache_kb: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill untabulated fixture layers from the nearest tabulated layer.
    #[arg(long)]
    pub interpolate: bool,
}

impl Common {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply(&Overrides {
            pe: self.pe,
            cache_kb: self.cache_kb,
            mode: self.mode.map(|m| match m {
                ModeArg::Singular => TaskMode::Singular,
                ModeArg::Pipelined => TaskMode::Pipelined,
            }),
            seed: self.seed,
            out: self.out.clone(),
            interpolate: self.interpolate,
        })?;
        Ok(config)
    }
}

pub fn run(cli: &Cli) -> CliResult<OutputDir> {
    let (common, f): (&Common, fn(&ExperimentConfig) -> CliResult<OutputDir>) = match &cli.command {
        Command::Storage(c) => (c, commands::storage),
        Command::Energy(c) => (c, commands::energy),
        Command::Throughput(c) => (c, commands::throughput),
        Command::Ablate(c) => (c, commands::ablate),
        Command::Train(c) => (c, commands::train),
        Command::Sparsity(c) => (c, commands::sparsity),
    };
    f(&common.resolve()?)
}
