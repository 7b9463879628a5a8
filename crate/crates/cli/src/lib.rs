//! Command-line surface for the posting-schedule library: argument
//! parsing, configuration resolution, command implementations, and the
//! output file schemas.
//!
//! Exposed as a library so the schemas and parsers are testable (and
//! fuzzable) without spawning processes; the `feedshape` binary is a thin
//! wrapper around [`run`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

use feedshape::{Error, Result};

/// Exit code for domain and validation errors.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 2;

/// Dispatches a parsed invocation, honoring a `--threads` cap by running
/// the command inside a bounded thread pool (results are identical for any
/// thread count; the cap only limits parallelism).
pub fn run(cli: &cli::Cli) -> Result<()> {
    let shared = shared_of(&cli.command);
    let file = config::load_config(shared.config.as_deref())?;
    let threads = shared.threads.or(file.threads);
    match threads {
        None => dispatch(&cli.command),
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command))
        }
    }
}

fn shared_of(command: &cli::Command) -> &cli::SharedArgs {
    match command {
        cli::Command::Fit(args) => &args.shared,
        cli::Command::Optimize(args) => &args.shared,
        cli::Command::Baseline(args) => &args.shared,
        cli::Command::Evaluate(args) => &args.shared,
        cli::Command::Trajectory(args) => &args.shared,
    }
}

fn dispatch(command: &cli::Command) -> Result<()> {
    match command {
        cli::Command::Fit(args) => commands::cmd_fit(args),
        cli::Command::Optimize(args) => commands::cmd_optimize(args),
        cli::Command::Baseline(args) => commands::cmd_baseline(args),
        cli::Command::Evaluate(args) => commands::cmd_evaluate(args),
        cli::Command::Trajectory(args) => commands::cmd_trajectory(args),
    }
}

/// Maps an error to the documented exit code: 2 for I/O, 1 otherwise.
pub fn exit_code(error: &Error) -> i32 {
    if error.is_io() {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}
