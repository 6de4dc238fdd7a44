//! `coremap` — partition SNN models into logical cores, map them onto a
//! 2D-mesh many-core grid, and evaluate every mapping with a deterministic
//! NoC simulator.
//!
//! Exit codes: 0 success, 1 usage, 2 validation (bad files, infeasible
//! instances, undersized meshes), 3 internal.

mod commands;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use coremap_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
    fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_) | CoreError::Internal(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "coremap",
    version,
    about = "SNN core partitioning, mesh placement optimization, and NoC simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition a model into balanced logical cores and emit the task graph
    Partition(PartitionArgs),
    /// Place a task graph on a mesh with a baseline engine
    Place(PlaceArgs),
    /// Train the RL placement policy and emit the best placement found
    Train(TrainArgs),
    /// Simulate a placed task graph and report latency/throughput/utilization
    Simulate(SimulateArgs),
    /// Aggregate run directories into a comparison table (CSV)
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct HwArgs {
    /// MACs per core (must be a perfect square)
    #[arg(long)]
    pub macs_per_core: Option<u64>,
    /// On-core SRAM in bytes
    #[arg(long)]
    pub sram_bytes: Option<u64>,
    /// Mesh link bandwidth in bytes/cycle
    #[arg(long)]
    pub link_bandwidth: Option<u64>,
    /// Off-chip bandwidth in bytes/cycle (overflow weight streaming)
    #[arg(long)]
    pub offchip_bandwidth: Option<u64>,
    /// Fraction of SRAM reserved for activations
    #[arg(long)]
    pub sram_reserve: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Model spec JSON
    #[arg(long)]
    pub model: PathBuf,
    /// Number of logical cores (slices) to produce
    #[arg(long)]
    pub cores: usize,
    /// inference or training
    #[arg(long, default_value = "inference")]
    pub mode: String,
    /// Override every layer's timestep count
    #[arg(long)]
    pub timesteps: Option<u64>,
    #[command(flatten)]
    pub hw: HwArgs,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    /// Task graph JSON (from `coremap partition`)
    #[arg(long)]
    pub graph: PathBuf,
    /// Mesh dimensions, e.g. 4x8
    #[arg(long)]
    pub mesh: String,
    /// zigzag | snake | random | oracle
    #[arg(long)]
    pub engine: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random-search iterations
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Mesh dimensions, e.g. 4x8
    #[arg(long)]
    pub mesh: String,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub clip_epsilon: f64,
    #[arg(long, default_value_t = 10)]
    pub ppo_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_min: f64,
    /// sgd | adam
    #[arg(long, default_value = "sgd")]
    pub optimizer: String,
    /// Fit the frozen encoder as an autoencoder before training
    #[arg(long, default_value_t = false)]
    pub pretrain_encoder: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub placement: PathBuf,
    /// layerwise | fpdeep
    #[arg(long, default_value = "layerwise")]
    pub pipeline: String,
    #[arg(long, default_value_t = 8)]
    pub batch: u32,
    /// Link bandwidth in bytes/cycle
    #[arg(long, default_value_t = 16)]
    pub bandwidth: u64,
    /// Fine-grained tile fraction for fpdeep
    #[arg(long, default_value_t = 0.0625)]
    pub tile_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub chunk_bytes: u64,
    /// Waveform bucket in cycles (default: makespan/256)
    #[arg(long)]
    pub bucket: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory containing run directories
    #[arg(long)]
    pub runs: PathBuf,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Partition(args) => commands::partition(args),
        Command::Place(args) => commands::place(args),
        Command::Train(args) => commands::train(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Report(args) => report::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Parses "WxH" mesh dimensions.
pub fn parse_mesh(text: &str) -> Result<coremap_core::mesh::Mesh, CliError> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError::usage(format!("mesh must look like 4x8, got `{text}`")))?;
    let w: u32 = w
        .parse()
        .map_err(|_| CliError::usage(format!("bad mesh width `{w}`")))?;
    let h: u32 = h
        .parse()
        .map_err(|_| CliError::usage(format!("bad mesh height `{h}`")))?;
    Ok(coremap_core::mesh::Mesh::new(w, h)?)
}
