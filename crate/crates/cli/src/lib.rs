// SPDX-License-Identifier: Apache-2.0

//! `lifsnn` command line: encode images to spike trains, quantize networks,
//! run float or hardware-model inference, compare the two, print metrics and
//! train the toy classifier.

pub mod commands;
pub mod error;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::CliError;
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "lifsnn",
    version,
    about = "Fixed-point LIF spiking-network accelerator model"
)]
pub struct Cli {
    /// Also write the run manifest to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate-code a binary PGM image into an SPKT spike file.
    Encode(EncodeArgs),
    /// Quantize a float network (JSON) to an SNNW weight file.
    Quantize(QuantizeArgs),
    /// Classify a spike file with the float network or the hardware model.
    Infer(InferArgs),
    /// Run both models and report where they first diverge.
    Compare(CompareArgs),
    /// Print throughput and energy-efficiency metrics.
    Bench(BenchArgs),
    /// Train the toy left/right classifier.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Binary (P5) PGM image with maxval 255.
    pub image: PathBuf,
    #[arg(long, default_value_t = lifsnn::encoding::DEFAULT_TIMESTEPS)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Resize (nearest neighbour) to SIZE x SIZE before encoding.
    #[arg(long, default_value_t = 64, conflicts_with = "no_resize")]
    pub size: usize,
    /// Encode at the image's own resolution.
    #[arg(long)]
    pub no_resize: bool,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Float network JSON.
    pub net: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Float,
    Hw,
}

#[derive(Debug, Args)]
pub struct NetInput {
    /// SNNW weight file or float network JSON.
    #[arg(long, value_name = "PATH")]
    pub net: PathBuf,
    /// SPKT spike file.
    #[arg(long, value_name = "PATH")]
    pub spikes: PathBuf,
    /// NetworkConfig JSON; overrides sizes and neuron parameters.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Print the per-timestep membrane and spike log.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub input: NetInput,
    #[arg(long, value_enum, default_value_t = Mode::Hw)]
    pub mode: Mode,
    /// Neurons evaluated in parallel in the cycle model.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: NetInput,
    /// Membrane difference that counts as a divergence.
    #[arg(long, default_value_t = 1.0 / 32768.0)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// NetworkConfig JSON for the cycle model (default 4096-512-2, T=25).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Known throughput; skips the cycle model.
    #[arg(long)]
    pub gops: Option<f64>,
    #[arg(long)]
    pub power_mw: f64,
    /// Clock for the cycle model.
    #[arg(long)]
    pub freq_mhz: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Quantized weights (SNNW).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-epoch curve.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Also save the float network as JSON.
    #[arg(long, value_name = "PATH")]
    pub float_out: Option<PathBuf>,
}

/// Parse `argv` (including the program name) and run the command, writing
/// results to `out`.
pub fn run(argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(out, "{e}").map_err(|e| CliError::Invalid(e.to_string()))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            return Err(CliError::Usage(
                text.trim_start_matches("error: ").trim_end().to_string(),
            ));
        }
    };
    commands::dispatch(&cli, argv, out)
}
