//! `mbcast` command-line front end.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 unsatisfiable
//! plan, 64 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod checks;
pub mod commands;
pub mod error;
pub mod format;
pub mod scenario;

pub use error::{CliError, EXIT_CHECK_FAILED, EXIT_OK, EXIT_UNSATISFIABLE, EXIT_USAGE};

/// Environment variable selecting the simulation worker count.
pub const THREADS_ENV: &str = "MBCAST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mbcast", version, about = "Buffer planning and simulation for DASH over broadcast with AL-FEC")]
#[command(args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum buffer level that absorbs the protected burst of losses.
    PlanBuffer(PlanBufferArgs),
    /// availabilityStartTime and playback deadline.
    PlanTiming(PlanTimingArgs),
    /// Loss probability, service rate and buffer over a code rate / segment
    /// duration grid.
    Sweep(SweepArgs),
    /// Run a scenario file and write users.csv and summary.json.
    SimRun(SimRunArgs),
    /// Cross-check analytic results against simulation.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct PlanBufferArgs {
    /// Segment loss probability, bypassing the FEC model.
    #[arg(long)]
    pub p_loss: Option<f64>,
    /// Packet error rate of the broadcast channel.
    #[arg(long)]
    pub per: Option<f64>,
    /// Source symbols per segment.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub segment_bytes: Option<u64>,
    #[arg(long)]
    pub code_rate: Option<f64>,
    #[arg(long, default_value_t = mbcast::fec::DEFAULT_SYMBOL_SIZE)]
    pub symbol_size: u32,
    #[arg(long, default_value_t = mbcast::planner::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Segment duration in seconds.
    #[arg(long)]
    pub t_seg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rtt: f64,
    /// Unicast transfer delay per segment in seconds.
    #[arg(long, conflicts_with = "unicast_rate")]
    pub d_t: Option<f64>,
    /// Unicast throughput in bits per second.
    #[arg(long)]
    pub unicast_rate: Option<f64>,
    /// Media bitrate in bits per second, used to size segments for
    /// `--unicast-rate` when neither `--segment-bytes` nor `--k` is given.
    #[arg(long)]
    pub media_bitrate: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct PlanTimingArgs {
    #[arg(long)]
    pub t_seg: f64,
    /// Broadcast link rate in bits per second.
    #[arg(long)]
    pub r_embms: f64,
    #[arg(long)]
    pub media_bitrate: f64,
    #[arg(long)]
    pub code_rate: f64,
    /// Segment generation delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub d_se: f64,
    /// FEC encoding delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub d_fe: f64,
    /// FEC decoding delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub d_fd: f64,
    /// Safety margin in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub d_pvs: f64,
    /// Buffer level in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub d_b: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    /// Comma-separated segment durations in seconds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t_segs: Vec<f64>,
    /// Comma-separated code rates.
    #[arg(long, value_delimiter = ',', required = true)]
    pub code_rates: Vec<f64>,
    #[arg(long)]
    pub per: f64,
    #[arg(long)]
    pub r_embms: f64,
    #[arg(long)]
    pub media_bitrate: f64,
    #[arg(long, default_value_t = mbcast::fec::DEFAULT_SYMBOL_SIZE)]
    pub symbol_size: u32,
    #[arg(long, default_value_t = mbcast::planner::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rtt: f64,
    /// Unicast transfer delay in seconds.
    #[arg(long, group = "transfer")]
    pub d_t: Option<f64>,
    /// Unicast transfer delay as a multiple of the segment duration.
    #[arg(long, group = "transfer")]
    pub d_t_factor: Option<f64>,
    /// Unicast throughput in bits per second.
    #[arg(long, group = "transfer")]
    pub unicast_rate: Option<f64>,
    /// Largest tolerated share of segments recovered over unicast.
    #[arg(long, default_value_t = 0.1)]
    pub recovery_limit: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimRunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory for users.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Monte Carlo trials; the 3-sigma tolerance scales with it.
    #[arg(long, default_value_t = checks::DEFAULT_TRIALS)]
    pub trials: u64,
    /// Run only these checks (repeatable).
    #[arg(long = "check")]
    pub checks: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::PlanBuffer(a) => commands::plan_buffer(&a, out),
        Command::PlanTiming(a) => commands::plan_timing(&a, out, err),
        Command::Sweep(a) => commands::sweep(&a, out),
        Command::SimRun(a) => commands::sim_run(&a, std::env::var(THREADS_ENV).ok().as_deref(), out),
        Command::Validate(a) => commands::validate(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
