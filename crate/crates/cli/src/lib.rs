//! `tactile` command-line front end. Every pipeline stage is its own
//! subcommand so intermediate files can be inspected or swapped.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tactile_core::Error;

pub mod commands;
pub mod config;

pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const EMPTY: i32 = 3;
    pub const CALIBRATION: i32 = 4;
    pub const NUMERIC: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: exit::USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::EmptyDataset(_) | Error::Evaluation(_) => exit::EMPTY,
            Error::Calibration(_) | Error::Geometry(_) => exit::CALIBRATION,
            Error::Numeric(_) | Error::Divergence { .. } => exit::NUMERIC,
            _ => exit::USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tactile", version, about = "Vision-based tactile sensing pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitKind {
    Standard,
    Object,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long, value_enum, default_value = "standard")]
    pub split: SplitKind,
    /// Standard split test size (default from config).
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Object split test objects, comma separated (default from config).
    #[arg(long, value_delimiter = ',')]
    pub test_objects: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a default configuration file.
    Init {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize raw reference, calibration-ball and board images.
    SimulateCalibration {
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize one raw ball press.
    SimulatePress {
        #[command(flatten)]
        common: Common,
        /// Ball radius, mm.
        #[arg(long)]
        radius: f64,
        /// Press depth, mm.
        #[arg(long)]
        depth: f64,
        /// Contact center in raw pixels (default: frame center).
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
    },
    /// Fit the rectification remap and the intensity-depth table.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        ball: PathBuf,
        #[arg(long)]
        board: PathBuf,
    },
    /// Depth map and point cloud from one tactile image.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        table: PathBuf,
        /// Remap header; without it the images must already be rectified.
        #[arg(long)]
        remap: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        tactile: PathBuf,
        /// Also write a red/green deformation visualization.
        #[arg(long)]
        visualize: bool,
    },
    /// Simulate sessions and collect a gated image-wrench dataset.
    SimulateDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the wrench regressor on a split of a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Evaluate trained parameters (or the constant-mean baseline) on the
    /// test half of a split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        split: SplitArgs,
    },
}

/// Parses arguments and runs one command; output lines go to `out`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
        CliError { code, message: e.to_string() }
    })?;
    commands::dispatch(cli.command, out)
}
