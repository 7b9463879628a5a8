//! Implementations of the five subcommands. Each takes already-parsed
//! arguments, resolves its configuration (flags over config file over
//! defaults), runs the library, writes one output file embedding the
//! resolved configuration, and prints a one-line summary.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use feedshape::fit::{fit_profile, fold_feed_periods, EventLog};
use feedshape::formats::{
    read_event_log, read_follow_graph, read_profiles, write_profiles, GridSpec, ProfilesFile,
};
use feedshape::optimize::{
    baseline_allocate, objective_value, per_follower_visibility, solve_avm, solve_mvm,
    BaselineKind, BroadcastProblem, Objective, SolveOptions,
};
use feedshape::seeds::child_seed;
use feedshape::simulate::{heldout_visibility, monte_carlo_visibility};
use feedshape::visibility::{fk_trajectory, weighted_visibility};
use feedshape::{Error, PiecewiseConstantFn, Result, TimeGrid, UserId};

use crate::cli::{
    BaselineArgs, EvaluateArgs, FitArgs, KindArg, ObjectiveArg, OptimizeArgs, SchemeArg,
    TrajectoryArgs,
};
use crate::config::{
    load_config, resolve, RunConfig, DEFAULT_GRID_HOURS, DEFAULT_K, DEFAULT_PIECES, DEFAULT_RUNS,
    DEFAULT_SEED,
};
use crate::output::{
    read_solution, write_json, FollowerValue, ObjectiveSpec, ReportEntry, ReportFile,
    SolutionFile, REPORT_FORMAT_VERSION, SOLUTION_FORMAT_VERSION,
};

/// Fits every user appearing in the log or the graph and writes a profiles
/// document.
pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let file = load_config(args.shared.config.as_deref())?;
    let grid_hours = resolve(args.shared.grid_hours, file.grid_hours, DEFAULT_GRID_HOURS);
    let pieces = resolve(args.shared.pieces, file.pieces, DEFAULT_PIECES);
    let grid = TimeGrid::new(grid_hours, pieces)?;

    let records = read_event_log(&args.events)?;
    let network = read_follow_graph(&args.graph)?;
    let log = EventLog::aligned(records, grid_hours)?;

    let mut users: BTreeSet<UserId> = log.users();
    users.extend(network.users());

    let mut config = RunConfig::new("fit", &args.out);
    config.events = Some(args.events.display().to_string());
    config.graph = Some(args.graph.display().to_string());
    config.grid_hours = Some(grid_hours);
    config.pieces = Some(pieces);
    config.threads = args.shared.threads.or(file.threads);

    let mut profiles = ProfilesFile::new(grid);
    for user in &users {
        profiles.insert(&fit_profile(&log, user, grid)?);
    }
    profiles.set_network(&network);
    profiles.config = Some(serde_json::to_value(&config)?);
    write_profiles(&args.out, &profiles)?;

    println!(
        "fitted {} users over {} whole periods ({} events, {} follow edges) -> {}",
        users.len(),
        log.whole_periods(grid_hours),
        log.len(),
        network.edge_count(),
        args.out.display()
    );
    Ok(())
}

/// Resolves the problem shared by `optimize` and `baseline`.
fn assemble_problem(
    profiles: &ProfilesFile,
    broadcaster: &UserId,
    k: usize,
    budget: Option<f64>,
    objective: Objective,
) -> Result<BroadcastProblem> {
    profiles.problem(broadcaster, k, budget, objective)
}

/// Builds a solution document from solver output.
#[allow(clippy::too_many_arguments)]
fn solution_file(
    config: RunConfig,
    grid: GridSpec,
    broadcaster: UserId,
    k: usize,
    budget: f64,
    objective: ObjectiveSpec,
    method: &str,
    objective_value: f64,
    rates: Vec<f64>,
    per_follower: Vec<(UserId, f64)>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> SolutionFile {
    SolutionFile {
        format_version: SOLUTION_FORMAT_VERSION,
        config,
        grid,
        broadcaster,
        k,
        budget,
        objective,
        method: method.to_string(),
        objective_value,
        rates,
        per_follower: per_follower
            .into_iter()
            .map(|(id, visibility)| FollowerValue { id, visibility })
            .collect(),
        trace,
        iterations,
        converged,
    }
}

/// Runs the projected-ascent solver and writes a solution document.
pub fn cmd_optimize(args: &OptimizeArgs) -> Result<()> {
    let file = load_config(args.shared.config.as_deref())?;
    let k = resolve(args.shared.k, file.k, DEFAULT_K);
    let budget_flag = args.shared.budget.or(file.budget);

    let profiles = read_profiles(&args.profiles)?;
    let broadcaster = UserId::new(args.broadcaster.clone())?;
    let objective_spec = match args.objective {
        ObjectiveArg::Avm => {
            if args.worst.is_some() {
                return Err(Error::invalid(
                    "--worst only applies to the mvm objective",
                ));
            }
            ObjectiveSpec::Avm
        }
        ObjectiveArg::Mvm => ObjectiveSpec::Mvm {
            worst: args.worst.unwrap_or(1),
        },
    };
    let problem = assemble_problem(
        &profiles,
        &broadcaster,
        k,
        budget_flag,
        objective_spec.objective(),
    )?;

    let options = SolveOptions::default();
    let solution = match objective_spec {
        ObjectiveSpec::Avm => solve_avm(&problem, &options)?,
        ObjectiveSpec::Mvm { .. } => solve_mvm(&problem, &options)?,
    };

    let mut config = RunConfig::new("optimize", &args.out);
    config.profiles = Some(args.profiles.display().to_string());
    config.broadcaster = Some(broadcaster.to_string());
    config.k = Some(k);
    config.budget = Some(problem.budget());
    config.objective = Some(objective_name(objective_spec).to_string());
    if let ObjectiveSpec::Mvm { worst } = objective_spec {
        config.worst = Some(worst);
    }
    config.threads = args.shared.threads.or(file.threads);

    let document = solution_file(
        config,
        problem.grid().into(),
        broadcaster.clone(),
        k,
        problem.budget(),
        objective_spec,
        "gradient",
        solution.objective_value,
        solution.rates,
        solution.per_follower,
        solution.trace,
        solution.iterations,
        solution.converged,
    );
    write_json(&args.out, &document)?;

    println!(
        "optimized {} for {}: objective {:.6} after {} iterations ({}) -> {}",
        objective_name(objective_spec),
        broadcaster,
        document.objective_value,
        document.iterations,
        if document.converged {
            "converged"
        } else {
            "iteration cap"
        },
        args.out.display()
    );
    Ok(())
}

fn objective_name(spec: ObjectiveSpec) -> &'static str {
    match spec {
        ObjectiveSpec::Avm => "avm",
        ObjectiveSpec::Mvm { .. } => "mvm",
    }
}

/// Computes a reference allocation and writes it in the solution schema.
pub fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let file = load_config(args.shared.config.as_deref())?;
    let k = resolve(args.shared.k, file.k, DEFAULT_K);
    let seed = resolve(args.shared.seed, file.seed, DEFAULT_SEED);
    let budget_flag = args.shared.budget.or(file.budget);

    let profiles = read_profiles(&args.profiles)?;
    let broadcaster = UserId::new(args.broadcaster.clone())?;
    let (kind, objective_spec) = match args.kind {
        KindArg::Ravm => (BaselineKind::RandomAvm, ObjectiveSpec::Avm),
        KindArg::Iavm => (BaselineKind::IntensityAvm, ObjectiveSpec::Avm),
        KindArg::Pavm => (BaselineKind::PopularityAvm, ObjectiveSpec::Avm),
        KindArg::Rmvm => (
            BaselineKind::RandomMvm,
            ObjectiveSpec::Mvm {
                worst: args.worst.unwrap_or(1),
            },
        ),
        KindArg::Imvm => (
            BaselineKind::IntensityMvm,
            ObjectiveSpec::Mvm {
                worst: args.worst.unwrap_or(1),
            },
        ),
        KindArg::Gmvm => (
            BaselineKind::GreedyMvm,
            ObjectiveSpec::Mvm {
                worst: args.worst.unwrap_or(1),
            },
        ),
    };
    if matches!(objective_spec, ObjectiveSpec::Avm) && args.worst.is_some() {
        return Err(Error::invalid("--worst only applies to mvm baseline kinds"));
    }
    let problem = assemble_problem(
        &profiles,
        &broadcaster,
        k,
        budget_flag,
        objective_spec.objective(),
    )?;

    let rates = baseline_allocate(&problem, kind, seed)?;
    let value = objective_value(&problem, &rates)?;
    let per_follower = per_follower_visibility(&problem, &rates)?;

    let kind_name = kind_name(args.kind);
    let mut config = RunConfig::new("baseline", &args.out);
    config.profiles = Some(args.profiles.display().to_string());
    config.broadcaster = Some(broadcaster.to_string());
    config.k = Some(k);
    config.budget = Some(problem.budget());
    config.kind = Some(kind_name.to_string());
    if let ObjectiveSpec::Mvm { worst } = objective_spec {
        config.worst = Some(worst);
    }
    if matches!(kind, BaselineKind::RandomAvm | BaselineKind::RandomMvm) {
        config.seed = Some(seed);
    }
    config.threads = args.shared.threads.or(file.threads);

    let document = solution_file(
        config,
        problem.grid().into(),
        broadcaster.clone(),
        k,
        problem.budget(),
        objective_spec,
        kind_name,
        value,
        rates,
        per_follower,
        vec![value],
        0,
        true,
    );
    write_json(&args.out, &document)?;

    println!(
        "baseline {} for {}: objective {:.6} -> {}",
        kind_name,
        broadcaster,
        document.objective_value,
        args.out.display()
    );
    Ok(())
}

fn kind_name(kind: KindArg) -> &'static str {
    match kind {
        KindArg::Ravm => "ravm",
        KindArg::Iavm => "iavm",
        KindArg::Pavm => "pavm",
        KindArg::Rmvm => "rmvm",
        KindArg::Imvm => "imvm",
        KindArg::Gmvm => "gmvm",
    }
}

/// Checks that a solution and a profiles document share a grid.
fn check_grids(solution: &SolutionFile, profiles: &ProfilesFile) -> Result<TimeGrid> {
    if solution.grid != profiles.grid {
        return Err(Error::GridMismatch(format!(
            "solution grid T={} M={} vs profiles grid T={} M={}",
            solution.grid.horizon,
            solution.grid.pieces,
            profiles.grid.horizon,
            profiles.grid.pieces
        )));
    }
    solution.grid.grid()
}

/// Evaluates a stored schedule under one of the three schemes.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let file = load_config(args.shared.config.as_deref())?;
    let runs = resolve(args.shared.runs, file.runs, DEFAULT_RUNS);
    let seed = resolve(args.shared.seed, file.seed, DEFAULT_SEED);

    let solution = read_solution(&args.solution)?;
    let profiles = read_profiles(&args.profiles)?;
    let grid = check_grids(&solution, &profiles)?;
    let k = solution.k;
    let broadcaster = solution.broadcaster.clone();
    let lambda = PiecewiseConstantFn::new(grid, solution.rates.clone())?;

    // Rebuild the follower feeds exactly as the solver saw them.
    let problem = profiles.problem(
        &broadcaster,
        k,
        Some(solution.budget),
        solution.objective.objective(),
    )?;

    let stochastic = !matches!(args.scheme, SchemeArg::Theoretical);
    if stochastic && runs == 0 {
        return Err(Error::invalid(
            "stochastic evaluation needs at least one run",
        ));
    }

    let mut entries = Vec::with_capacity(problem.followers().len());
    match args.scheme {
        SchemeArg::Theoretical => {
            for follower in problem.followers() {
                let value = weighted_visibility(&lambda, follower.mu(), follower.s(), k)?;
                entries.push(ReportEntry {
                    id: follower.id().clone(),
                    mean: value.value,
                    standard_error: None,
                });
            }
        }
        SchemeArg::Simulated => {
            for (idx, follower) in problem.followers().iter().enumerate() {
                let (mean, se) = monte_carlo_visibility(
                    &lambda,
                    follower.mu(),
                    k,
                    Some(follower.s()),
                    runs,
                    child_seed(seed, idx as u64),
                )?;
                entries.push(ReportEntry {
                    id: follower.id().clone(),
                    mean,
                    standard_error: Some(se),
                });
            }
        }
        SchemeArg::Heldout => {
            let events = args.events.as_deref().ok_or_else(|| {
                Error::invalid("the heldout scheme requires --events with recorded test events")
            })?;
            let records = read_event_log(events)?;
            let log = EventLog::aligned(records, grid.horizon())?;
            let network = profiles.network()?;
            for (idx, follower) in problem.followers().iter().enumerate() {
                let periods =
                    fold_feed_periods(&network, &log, &broadcaster, follower.id(), grid)?;
                let (mean, se) = heldout_visibility(
                    &lambda,
                    &periods,
                    k,
                    Some(follower.s()),
                    runs,
                    child_seed(seed, idx as u64),
                )?;
                entries.push(ReportEntry {
                    id: follower.id().clone(),
                    mean,
                    standard_error: Some(se),
                });
            }
        }
    }
    let total: f64 = entries.iter().map(|e| e.mean).sum();

    let scheme_name = scheme_name(args.scheme);
    let mut config = RunConfig::new("evaluate", &args.out);
    config.solution = Some(args.solution.display().to_string());
    config.profiles = Some(args.profiles.display().to_string());
    if let Some(events) = &args.events {
        config.events = Some(events.display().to_string());
    }
    config.scheme = Some(scheme_name.to_string());
    config.k = Some(k);
    if stochastic {
        config.runs = Some(runs);
        config.seed = Some(seed);
    }
    config.threads = args.shared.threads.or(file.threads);

    let entry_count = entries.len();
    let document = ReportFile {
        format_version: REPORT_FORMAT_VERSION,
        config,
        scheme: scheme_name.to_string(),
        grid: solution.grid,
        broadcaster: broadcaster.clone(),
        k,
        per_follower: entries,
        total,
        runs: stochastic.then_some(runs),
    };
    write_json(&args.out, &document)?;

    println!(
        "evaluated {} for {}: total {:.6} visible hours over {} followers -> {}",
        scheme_name,
        broadcaster,
        total,
        entry_count,
        args.out.display()
    );
    Ok(())
}

fn scheme_name(scheme: SchemeArg) -> &'static str {
    match scheme {
        SchemeArg::Theoretical => "theoretical",
        SchemeArg::Simulated => "simulated",
        SchemeArg::Heldout => "heldout",
    }
}

/// Samples the rank-probability curve of one follower on a one-minute grid
/// and writes a plot-ready CSV.
pub fn cmd_trajectory(args: &TrajectoryArgs) -> Result<()> {
    let file = load_config(args.shared.config.as_deref())?;

    let solution = read_solution(&args.solution)?;
    let profiles = read_profiles(&args.profiles)?;
    let grid = check_grids(&solution, &profiles)?;
    let k = resolve(args.shared.k, file.k, solution.k);
    let follower_id = UserId::new(args.follower.clone())?;
    let broadcaster = solution.broadcaster.clone();

    let problem = profiles.problem(
        &broadcaster,
        k,
        Some(solution.budget),
        Objective::AverageVisibility,
    )?;
    let follower = problem
        .followers()
        .iter()
        .find(|f| f.id() == &follower_id)
        .ok_or_else(|| {
            Error::UnknownUser(format!("{follower_id} does not follow {broadcaster}"))
        })?;

    let lambda = PiecewiseConstantFn::new(grid, solution.rates.clone())?;
    let pieces = fk_trajectory(&lambda, follower.mu(), k)?;
    let delta = grid.delta();
    let horizon = grid.horizon();
    let attention = follower.s().values();

    let mut config = RunConfig::new("trajectory", &args.out);
    config.solution = Some(args.solution.display().to_string());
    config.profiles = Some(args.profiles.display().to_string());
    config.follower = Some(follower_id.to_string());
    config.k = Some(k);

    // Comment lines keep the provenance inside the file while staying
    // loadable by the usual plotting tools (`comment='#'`).
    let mut csv = format!(
        "# format_version: 1\n# config: {}\nt_hours,rank_probability,attention\n",
        serde_json::to_string(&config)?
    );
    let mut rows = 0usize;
    let total_minutes = (horizon * 60.0).ceil() as usize;
    for minute in 0..=total_minutes {
        let t = (minute as f64 / 60.0).min(horizon);
        let (piece, local) = if t >= horizon {
            (grid.pieces() - 1, 1.0)
        } else {
            let piece = grid.piece_index(t)?;
            (piece, (t - grid.piece_start(piece)) / delta)
        };
        let f = pieces[piece].eval(local);
        let s = attention[piece];
        writeln!(csv, "{t},{f},{s}").expect("string write");
        rows += 1;
        if t >= horizon {
            break;
        }
    }
    std::fs::write(&args.out, csv.as_bytes()).map_err(|e| Error::io(&args.out, e))?;

    println!(
        "trajectory for {} (k={}): {} samples -> {}",
        follower_id,
        k,
        rows,
        args.out.display()
    );
    Ok(())
}
