//! Command-line definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Top-level parser.
#[derive(Debug, Parser)]
#[command(
    name = "feedshape",
    version,
    about = "Fit, optimize, and evaluate periodic posting schedules against followers' feeds"
)]
pub struct Cli {
    /// Subcommand to run.
    #[command(subcommand)]
    pub command: Command,
}

/// The five subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit periodic posting profiles from an event log and a follow graph.
    Fit(FitArgs),
    /// Compute an optimal posting schedule for one broadcaster.
    Optimize(OptimizeArgs),
    /// Compute a reference allocation (random, proportional, or greedy).
    Baseline(BaselineArgs),
    /// Evaluate a stored schedule theoretically, by simulation, or against
    /// held-out recorded events.
    Evaluate(EvaluateArgs),
    /// Export one follower's rank-probability curve as a plot-ready CSV.
    Trajectory(TrajectoryArgs),
}

/// Flags shared by all subcommands. Values resolve as flag, then config
/// file, then default.
#[derive(Debug, Args)]
pub struct SharedArgs {
    /// Period length in hours (default 24).
    #[arg(long = "grid-hours", value_name = "HOURS")]
    pub grid_hours: Option<f64>,
    /// Number of equal grid pieces (default 24).
    #[arg(long, value_name = "M")]
    pub pieces: Option<usize>,
    /// Rank threshold: visibility counts the top k feed slots (default 1).
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Posting budget in expected posts per period (default: the
    /// broadcaster's fitted average).
    #[arg(long, value_name = "C")]
    pub budget: Option<f64>,
    /// Master seed for stochastic steps (default 0).
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Monte Carlo runs per follower (default 1000).
    #[arg(long, value_name = "N")]
    pub runs: Option<u32>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// TOML config file supplying defaults for the flags above.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

/// Arguments of `feedshape fit`.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Event log: lines of `user_id<TAB>unix_seconds` (gzip transparent).
    #[arg(long, value_name = "PATH")]
    pub events: PathBuf,
    /// Follow graph: lines of `broadcaster_id<TAB>follower_id`.
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    /// Output profiles JSON path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    /// Maximize total attention-weighted visibility over all followers.
    Avm,
    /// Maximize the sum over the `--worst` least-visible followers.
    Mvm,
}

/// Arguments of `feedshape optimize`.
#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Profiles JSON produced by `fit`.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Broadcaster whose schedule to optimize.
    #[arg(long, value_name = "ID")]
    pub broadcaster: String,
    /// Objective to maximize.
    #[arg(long, value_enum, default_value = "avm")]
    pub objective: ObjectiveArg,
    /// Worst-follower count for the mvm objective (default 1).
    #[arg(long, value_name = "N")]
    pub worst: Option<usize>,
    /// Output solution JSON path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Baseline allocation strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    /// Random budget split (average objective).
    Ravm,
    /// Feed-intensity-proportional split (average objective).
    Iavm,
    /// Attention-weighted-intensity-proportional split (average objective).
    Pavm,
    /// Random budget split (minimum objective).
    Rmvm,
    /// Feed-intensity-proportional split (minimum objective).
    Imvm,
    /// Greedy worst-follower rounds (minimum objective).
    Gmvm,
}

/// Arguments of `feedshape baseline`.
#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Profiles JSON produced by `fit`.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Broadcaster whose schedule to allocate.
    #[arg(long, value_name = "ID")]
    pub broadcaster: String,
    /// Baseline strategy.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Worst-follower count for mvm-flavored kinds (default 1).
    #[arg(long, value_name = "N")]
    pub worst: Option<usize>,
    /// Output solution JSON path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Evaluation schemes, ordered by realism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Closed-form expected visibility (no randomness).
    Theoretical,
    /// Monte Carlo simulation of both streams.
    Simulated,
    /// Candidate schedule replayed against recorded events.
    Heldout,
}

/// Arguments of `feedshape evaluate`.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Solution JSON produced by `optimize` or `baseline`.
    #[arg(long, value_name = "PATH")]
    pub solution: PathBuf,
    /// Profiles JSON produced by `fit`.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Recorded test events (required by the heldout scheme).
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Evaluation scheme.
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Output report JSON path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Arguments of `feedshape trajectory`.
#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Solution JSON produced by `optimize` or `baseline`.
    #[arg(long, value_name = "PATH")]
    pub solution: PathBuf,
    /// Profiles JSON produced by `fit`.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Follower whose feed to trace.
    #[arg(long, value_name = "ID")]
    pub follower: String,
    /// Output CSV path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
}
