//! `floodmap`: the flood-mapping pipeline as file-to-file subcommands.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use floodmap_core::Error as CoreError;
use log::error;

use commands::Ctx;

#[derive(Parser)]
#[command(
    name = "floodmap",
    version,
    about = "Flood-extent mapping from paired SAR scenes"
)]
struct Cli {
    /// key=value config file (flags override it, it overrides defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for tile-level parallelism (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for synthetic generation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair scenes, classify, filter and emit detection records
    Detect(commands::detect::DetectArgs),
    /// Compose detections into a buffered extent, optionally coarsened
    Aggregate(commands::aggregate::AggregateArgs),
    /// Static exclusion mask from slope and land cover
    Mask(commands::mask::MaskArgs),
    /// Dilate a binary raster with a square structuring element
    Buffer(commands::buffer::BufferArgs),
    /// Land-cover impact of a flood extent
    Overlay(commands::overlay::OverlayArgs),
    /// Overlap statistics against reference layers
    Compare(commands::compare::CompareArgs),
    /// Monthly series, scenario trends, decomposition and tile trends
    Trend(commands::trend::TrendArgs),
    /// Deterministic synthetic scenes with planted truth
    Synth(commands::synth::SynthArgs),
    /// Confusion metrics of a predicted mask against truth
    Metrics(commands::metrics::MetricsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Detect(_) => "detect",
            Command::Aggregate(_) => "aggregate",
            Command::Mask(_) => "mask",
            Command::Buffer(_) => "buffer",
            Command::Overlay(_) => "overlay",
            Command::Compare(_) => "compare",
            Command::Trend(_) => "trend",
            Command::Synth(_) => "synth",
            Command::Metrics(_) => "metrics",
        }
    }
}

/// Exit codes: 2 malformed input, 3 grid/CRS mismatch, 4 I/O, 5 too little
/// data for a fit, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Parse { .. }
                | CoreError::NetSpec { .. }
                | CoreError::Format { .. }
                | CoreError::Truncated { .. }
                | CoreError::Csv(_) => 2,
                CoreError::GridMismatch(_) | CoreError::CrsMismatch { .. } => 3,
                CoreError::Io { .. } => 4,
                CoreError::InsufficientData(_) | CoreError::RankDeficient(_) => 5,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let name = cli.command.name();
    let mut ctx = Ctx::new(name, &cli.out, cli.config.as_deref(), cli.seed, cli.jobs)?;
    match &cli.command {
        Command::Detect(a) => commands::detect::run(&mut ctx, a)?,
        Command::Aggregate(a) => commands::aggregate::run(&mut ctx, a)?,
        Command::Mask(a) => commands::mask::run(&mut ctx, a)?,
        Command::Buffer(a) => commands::buffer::run(&mut ctx, a)?,
        Command::Overlay(a) => commands::overlay::run(&mut ctx, a)?,
        Command::Compare(a) => commands::compare::run(&mut ctx, a)?,
        Command::Trend(a) => commands::trend::run(&mut ctx, a)?,
        Command::Synth(a) => commands::synth::run(&mut ctx, a)?,
        Command::Metrics(a) => commands::metrics::run(&mut ctx, a)?,
    }
    let manifest = ctx.finish()?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
