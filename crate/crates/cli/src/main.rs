use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

/// Exit code 2 for usage and validation problems, 3 for bad input data.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "avmtbf",
    version,
    about = "Vehicle-level MTBF from perception error rates and driving statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, short, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Speed range boundaries in km/h, e.g. `80,100,130,180`.
    #[arg(long, value_delimiter = ',', value_name = "KMH,...")]
    pub partition: Option<Vec<f64>>,
    /// A lead is close when TTC is at most this many seconds.
    #[arg(long, value_name = "S")]
    pub ttc_limit: Option<f64>,
    /// Dead band separating accelerating, constant and decelerating leads, m/s².
    #[arg(long, value_name = "MPS2")]
    pub mode_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub counting: Option<Counting>,
    /// Ego reaction time, s.
    #[arg(long, value_name = "S")]
    pub reaction_time: Option<f64>,
    /// Ego braking deceleration, m/s².
    #[arg(long, value_name = "MPS2")]
    pub deceleration: Option<f64>,
    /// Lead braking deceleration during a false alarm, m/s².
    #[arg(long, value_name = "MPS2")]
    pub lead_deceleration: Option<f64>,
    /// Impacts strictly above this Δv (km/h) are severe.
    #[arg(long, value_name = "KMH")]
    pub severe_above: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Counting {
    ErrorFrames,
    ErrorEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorKind {
    Type1,
    Type2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Situation probabilities per speed range from track recordings.
    ExtractSituations(ExtractArgs),
    /// Share of driving time per speed range.
    SpeedDist(SpeedDistArgs),
    /// Severe perception error rates per speed range from a perception log.
    ErrorRates(ErrorRatesArgs),
    /// Evaluate the failure-rate model and its MTBF.
    Estimate(EstimateArgs),
    /// Error rate needed to reach a target MTBF.
    Require(RequireArgs),
    /// MTBF of a human driver from accident statistics.
    Baseline(BaselineArgs),
    /// Monte Carlo check of the analytical failure rate.
    Simulate(SimulateArgs),
    /// Impact Δv against a standing obstacle over a speed × gap grid.
    SeverityChart(SeverityChartArgs),
    /// Impact Δv after a false-alarm brake over a gap × duration grid.
    FalseAlarmChart(FalseAlarmChartArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `*_tracks.csv` files, or a single tracks file.
    #[arg(long, value_name = "PATH")]
    pub tracks: Option<PathBuf>,
    /// Also write the speed-distribution convergence report (CSV).
    #[arg(long, value_name = "PATH")]
    pub convergence: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SpeedDistArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub tracks: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub convergence: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErrorRatesArgs {
    #[command(flatten)]
    pub common: Common,
    /// Perception log CSV.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    /// Log metadata JSON (`frame_rate`, `road_max_speed`, optional `total_frames`).
    #[arg(long, value_name = "PATH")]
    pub meta: Option<PathBuf>,
    /// Worst-case speed for severity, km/h; overrides the metadata.
    #[arg(long, value_name = "KMH")]
    pub road_max_speed: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Situation table JSON.
    #[arg(long, value_name = "PATH")]
    pub situations: Option<PathBuf>,
    /// Error rate table JSON.
    #[arg(long, value_name = "PATH", conflicts_with = "rate")]
    pub rates: Option<PathBuf>,
    /// Constant error rate in every speed range, errors/hour.
    #[arg(long, value_name = "PER_HOUR")]
    pub rate: Option<f64>,
    /// Error type of `--rate`.
    #[arg(long, value_enum, default_value = "type2")]
    pub error_type: ErrorKind,
    /// Full model tree JSON instead of tables.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["situations", "rates", "rate"])]
    pub tree: Option<PathBuf>,
    /// Use per-range rates instead of pooled ones.
    #[arg(long)]
    pub per_range_rates: bool,
    #[arg(long, default_value = "highway")]
    pub profile: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Also write the text tree here.
    #[arg(long, value_name = "PATH")]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RequireArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target MTBF in hours; repeatable.
    #[arg(long = "target-mtbf", value_name = "HOURS", required = true)]
    pub targets: Vec<f64>,
    /// Situation table JSON providing κ.
    #[arg(long, value_name = "PATH")]
    pub situations: Option<PathBuf>,
    /// κ given directly.
    #[arg(long, conflicts_with = "situations")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub accidents: u64,
    /// Total vehicle kilometers driven.
    #[arg(long, value_name = "KM")]
    pub vehicle_km: f64,
    /// Average speed, km/h.
    #[arg(long, value_name = "KMH")]
    pub avg_speed: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Perception error rate, errors/hour.
    #[arg(long, value_name = "PER_HOUR", requires = "p_s")]
    pub lambda_p: Option<f64>,
    /// Situation probability.
    #[arg(long, value_name = "P")]
    pub p_s: Option<f64>,
    /// Model tree JSON.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["lambda_p", "p_s"])]
    pub tree: Option<PathBuf>,
    /// Exposure per trial, hours.
    #[arg(long, default_value_t = 1.0, value_name = "HOURS")]
    pub horizon: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exposure slices per trial for a tree; 0 splits exposure deterministically.
    #[arg(long)]
    pub slices: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SeverityChartArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.0, value_name = "KMH")]
    pub speed_min: f64,
    #[arg(long, default_value_t = 200.0, value_name = "KMH")]
    pub speed_max: f64,
    #[arg(long, default_value_t = 10.0, value_name = "KMH")]
    pub speed_step: f64,
    #[arg(long, default_value_t = 0.0, value_name = "M")]
    pub gap_min: f64,
    #[arg(long, default_value_t = 150.0, value_name = "M")]
    pub gap_max: f64,
    #[arg(long, default_value_t = 1.0, value_name = "M")]
    pub gap_step: f64,
}

#[derive(Debug, Args)]
pub struct FalseAlarmChartArgs {
    #[command(flatten)]
    pub common: Common,
    /// Common speed of both vehicles, km/h; repeatable.
    #[arg(long = "speed", default_values_t = [130.0], value_name = "KMH")]
    pub speeds: Vec<f64>,
    #[arg(long, default_value_t = 0.0, value_name = "M")]
    pub gap_min: f64,
    #[arg(long, default_value_t = 50.0, value_name = "M")]
    pub gap_max: f64,
    #[arg(long, default_value_t = 1.0, value_name = "M")]
    pub gap_step: f64,
    #[arg(long, default_value_t = 0.0, value_name = "S")]
    pub duration_min: f64,
    #[arg(long, default_value_t = 5.0, value_name = "S")]
    pub duration_max: f64,
    #[arg(long, default_value_t = 0.5, value_name = "S")]
    pub duration_step: f64,
    /// Also write the shortest severe duration per speed and gap (CSV).
    #[arg(long, value_name = "PATH")]
    pub boundary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ExtractSituations(a) => commands::extract_situations(a),
        Command::SpeedDist(a) => commands::speed_dist(a),
        Command::ErrorRates(a) => commands::error_rates(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Require(a) => commands::require(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::SeverityChart(a) => commands::severity_chart(a),
        Command::FalseAlarmChart(a) => commands::false_alarm_chart(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
