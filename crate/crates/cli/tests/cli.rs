//! Process-level tests: spawn the real binary, check exit codes, output
//! files, and the documented contracts (determinism, config embedding,
//! error surfaces).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use feedshape::formats::{read_profiles, write_profiles, ProfilesFile};
use feedshape::optimize::{solve_avm, Objective, SolveOptions};
use feedshape::visibility::fk_trajectory;
use feedshape::{PiecewiseConstantFn, TimeGrid, UserId};
use feedshape_cli::output::{parse_solution_bytes, ObjectiveSpec, SolutionFile};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_feedshape")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Runs the binary in `dir` and returns the full output.
fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary spawns")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Copies the fixture inputs into a fresh temp dir.
fn stage_fixtures() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["events.tsv", "graph.tsv", "test_events.tsv"] {
        std::fs::copy(fixtures().join(name), dir.path().join(name)).unwrap();
    }
    dir
}

/// Runs `fit` on the staged fixtures with the standard 4-piece daily grid.
fn fit_fixtures(dir: &Path) {
    let out = run_in(
        dir,
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--grid-hours",
            "24",
            "--pieces",
            "4",
            "--out",
            "profiles.json",
        ],
    );
    assert_success(&out);
}

#[test]
fn fit_matches_committed_golden_file() {
    let dir = stage_fixtures();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--grid-hours",
            "24",
            "--pieces",
            "4",
            "--out",
            "expected_profiles.json",
        ],
    );
    assert_success(&out);
    let produced = std::fs::read(dir.path().join("expected_profiles.json")).unwrap();
    let golden = std::fs::read(fixtures().join("expected_profiles.json")).unwrap();
    assert_eq!(produced, golden, "fit output drifted from the golden file");
}

#[test]
fn fit_empty_events_succeeds_with_zero_profiles() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("events.tsv"), b"").unwrap();
    std::fs::write(dir.path().join("graph.tsv"), b"u\tv\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--out",
            "p.json",
        ],
    );
    assert_success(&out);
    let profiles = read_profiles(&dir.path().join("p.json")).unwrap();
    assert_eq!(profiles.users.len(), 2);
    for stored in profiles.users.values() {
        assert!(stored.mu.iter().all(|&v| v == 0.0));
        assert_eq!(stored.events_per_period, 0.0);
    }
}

#[test]
fn fit_malformed_timestamp_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("events.tsv"), b"a\t100\nb\tnoon\n").unwrap();
    std::fs::write(dir.path().join("graph.tsv"), b"a\tb\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_input_file_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "nope.tsv",
            "--graph",
            "nope.tsv",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn help_is_exit_0_and_missing_args_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let help = run_in(dir.path(), &["--help"]);
    assert_eq!(exit_code(&help), 0);
    let none = run_in(dir.path(), &[]);
    assert_eq!(exit_code(&none), 1);
    let missing = run_in(dir.path(), &["fit"]);
    assert_eq!(exit_code(&missing), 1);
}

#[test]
fn optimize_matches_library_solver_bit_for_bit() {
    let dir = stage_fixtures();
    fit_fixtures(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--out",
            "solution.json",
        ],
    );
    assert_success(&out);
    let bytes = std::fs::read(dir.path().join("solution.json")).unwrap();
    let solution = parse_solution_bytes(&bytes).unwrap();
    assert_eq!(solution.objective, ObjectiveSpec::Avm);
    assert_eq!(solution.k, 1);
    assert_eq!(solution.budget, 2.0, "default budget is alice's posts/period");

    // Re-run the library on the same stored problem.
    let profiles = read_profiles(&dir.path().join("profiles.json")).unwrap();
    let problem = profiles
        .problem(
            &UserId::new("alice").unwrap(),
            1,
            None,
            Objective::AverageVisibility,
        )
        .unwrap();
    let expected = solve_avm(&problem, &SolveOptions::default()).unwrap();
    assert_eq!(solution.rates, expected.rates);
    assert_eq!(solution.objective_value, expected.objective_value);
    assert_eq!(solution.trace, expected.trace);
}

#[test]
fn optimize_is_deterministic_across_reruns_and_threads() {
    let dir = stage_fixtures();
    fit_fixtures(dir.path());
    let args = [
        "optimize",
        "--profiles",
        "profiles.json",
        "--broadcaster",
        "alice",
        "--objective",
        "mvm",
        "--worst",
        "2",
        "--out",
        "solution.json",
    ];
    assert_success(&run_in(dir.path(), &args));
    let first = std::fs::read(dir.path().join("solution.json")).unwrap();
    assert_success(&run_in(dir.path(), &args));
    let second = std::fs::read(dir.path().join("solution.json")).unwrap();
    assert_eq!(first, second, "same config must reproduce identical bytes");

    // A thread cap must not change the result.
    let mut threaded: Vec<&str> = args.to_vec();
    threaded.extend_from_slice(&["--threads", "1"]);
    assert_success(&run_in(dir.path(), &threaded));
    let third = std::fs::read(dir.path().join("solution.json")).unwrap();
    let a: SolutionFile = serde_json::from_slice(&first).unwrap();
    let b: SolutionFile = serde_json::from_slice(&third).unwrap();
    // Config differs (threads recorded); numeric payload must not.
    assert_eq!(a.rates, b.rates);
    assert_eq!(a.objective_value, b.objective_value);
    assert_eq!(a.per_follower, b.per_follower);
}

#[test]
fn optimize_rejects_bad_arguments() {
    let dir = stage_fixtures();
    fit_fixtures(dir.path());
    // mvm with more worst-followers than followers.
    let out = run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--objective",
            "mvm",
            "--worst",
            "5",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    // --worst with avm is rejected.
    let out = run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--worst",
            "1",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    // Unknown broadcaster.
    let out = run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "nobody",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn baseline_iavm_is_proportional_and_ravm_reproducible() {
    let dir = stage_fixtures();
    fit_fixtures(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "baseline",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--kind",
            "iavm",
            "--out",
            "iavm.json",
        ],
    );
    assert_success(&out);
    let solution =
        parse_solution_bytes(&std::fs::read(dir.path().join("iavm.json")).unwrap()).unwrap();
    // Total feed rate over alice's followers: bob sees carol (1/3 in piece
    // 1), carol sees nothing. Proportional split puts the whole budget of
    // 2 posts on piece 1: rate = 2 / 6h.
    assert_eq!(solution.method, "iavm");
    let expected = [0.0, 2.0 / 6.0, 0.0, 0.0];
    for (got, want) in solution.rates.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{:?}", solution.rates);
    }

    // Seeded random baseline reproduces bytes; a different seed differs.
    let args = [
        "baseline",
        "--profiles",
        "profiles.json",
        "--broadcaster",
        "alice",
        "--kind",
        "ravm",
        "--seed",
        "9",
        "--out",
        "ravm.json",
    ];
    assert_success(&run_in(dir.path(), &args));
    let first = std::fs::read(dir.path().join("ravm.json")).unwrap();
    assert_success(&run_in(dir.path(), &args));
    let second = std::fs::read(dir.path().join("ravm.json")).unwrap();
    assert_eq!(first, second);
    let mut other: Vec<&str> = args.to_vec();
    other[8] = "10";
    assert_success(&run_in(dir.path(), &other));
    let third = std::fs::read(dir.path().join("ravm.json")).unwrap();
    assert_ne!(first, third);

    // Unknown kind lists the valid ones.
    let out = run_in(
        dir.path(),
        &[
            "baseline",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--kind",
            "zavm",
            "--out",
            "z.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    let msg = stderr(&out);
    for kind in ["ravm", "iavm", "pavm", "rmvm", "imvm", "gmvm"] {
        assert!(msg.contains(kind), "stderr should list {kind}: {msg}");
    }
}

/// Fits and optimizes the fixtures, returning the staged directory.
fn prepared_solution() -> tempfile::TempDir {
    let dir = stage_fixtures();
    fit_fixtures(dir.path());
    assert_success(&run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "profiles.json",
            "--broadcaster",
            "alice",
            "--out",
            "solution.json",
        ],
    ));
    dir
}

#[test]
fn evaluate_theoretical_and_simulated_agree() {
    let dir = prepared_solution();
    assert_success(&run_in(
        dir.path(),
        &[
            "evaluate",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--scheme",
            "theoretical",
            "--out",
            "theory.json",
        ],
    ));
    assert_success(&run_in(
        dir.path(),
        &[
            "evaluate",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--scheme",
            "simulated",
            "--runs",
            "4000",
            "--seed",
            "3",
            "--out",
            "sim.json",
        ],
    ));
    let theory: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("theory.json")).unwrap()).unwrap();
    let sim: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sim.json")).unwrap()).unwrap();

    // The closed-form output consumes no randomness: no seed, no runs, no
    // standard errors.
    assert!(theory["config"].get("seed").is_none());
    assert!(theory["config"].get("runs").is_none());
    assert_eq!(theory["scheme"], "theoretical");

    let t_entries = theory["per_follower"].as_array().unwrap();
    let s_entries = sim["per_follower"].as_array().unwrap();
    assert_eq!(t_entries.len(), 2);
    assert_eq!(s_entries.len(), 2);
    for (t, s) in t_entries.iter().zip(s_entries) {
        assert_eq!(t["id"], s["id"]);
        let exact = t["mean"].as_f64().unwrap();
        let mean = s["mean"].as_f64().unwrap();
        let se = s["standard_error"].as_f64().unwrap();
        assert!(t.get("standard_error").is_none());
        assert!(
            (exact - mean).abs() < 3.0 * se.max(1e-4),
            "follower {}: exact {exact} vs simulated {mean} (se {se})",
            t["id"]
        );
    }
}

#[test]
fn evaluate_heldout_requires_events_and_works_with_them() {
    let dir = prepared_solution();
    let out = run_in(
        dir.path(),
        &[
            "evaluate",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--scheme",
            "heldout",
            "--out",
            "h.json",
        ],
    );
    assert_eq!(exit_code(&out), 1, "heldout without --events must fail");
    assert!(stderr(&out).contains("--events"));

    assert_success(&run_in(
        dir.path(),
        &[
            "evaluate",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--scheme",
            "heldout",
            "--events",
            "test_events.tsv",
            "--runs",
            "200",
            "--seed",
            "5",
            "--out",
            "h.json",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("h.json")).unwrap()).unwrap();
    assert_eq!(report["scheme"], "heldout");
    assert_eq!(report["runs"], 200);
    let entries = report["per_follower"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for entry in entries {
        let mean = entry["mean"].as_f64().unwrap();
        assert!(mean.is_finite() && mean >= 0.0);
        assert!(entry["standard_error"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn evaluate_rejects_zero_runs() {
    let dir = prepared_solution();
    let out = run_in(
        dir.path(),
        &[
            "evaluate",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--scheme",
            "simulated",
            "--runs",
            "0",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn trajectory_matches_interval_boundaries() {
    let dir = prepared_solution();
    assert_success(&run_in(
        dir.path(),
        &[
            "trajectory",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--follower",
            "bob",
            "--out",
            "bob.csv",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("bob.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# format_version"));
    assert!(lines.next().unwrap().starts_with("# config"));
    assert_eq!(lines.next().unwrap(), "t_hours,rank_probability,attention");
    let rows: Vec<(f64, f64, f64)> = lines
        .map(|line| {
            let mut parts = line.split(',');
            (
                parts.next().unwrap().parse().unwrap(),
                parts.next().unwrap().parse().unwrap(),
                parts.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 24 * 60 + 1, "one row per minute plus both ends");
    assert_eq!(rows[0], (0.0, 0.0, 0.0), "empty feed at time zero");

    // Rebuild the analytic trajectory and compare at the piece boundaries.
    let profiles = read_profiles(&dir.path().join("profiles.json")).unwrap();
    let solution =
        parse_solution_bytes(&std::fs::read(dir.path().join("solution.json")).unwrap()).unwrap();
    let grid = TimeGrid::new(24.0, 4).unwrap();
    let lambda = PiecewiseConstantFn::new(grid, solution.rates.clone()).unwrap();
    let mu = {
        // bob's feed is carol's intensity (alice is the broadcaster).
        let stored = &profiles.users[&UserId::new("carol").unwrap()];
        PiecewiseConstantFn::new(grid, stored.mu.clone()).unwrap()
    };
    let pieces = fk_trajectory(&lambda, &mu, 1).unwrap();
    for (piece, solutionpiece) in pieces.iter().enumerate() {
        let boundary_minute = (piece + 1) * 6 * 60;
        let exit = solutionpiece.exit()[0];
        let row = rows[boundary_minute];
        assert!(
            (row.1 - exit).abs() < 1e-12,
            "boundary {piece}: csv {} vs analytic {exit}",
            row.1
        );
    }
    // Attention column mirrors bob's stored profile (1 only in the last
    // piece; the final row keeps the last piece's value).
    assert_eq!(rows[10].2, 0.0);
    assert_eq!(rows[19 * 60].2, 1.0);
    assert_eq!(rows[24 * 60].2, 1.0);
}

#[test]
fn trajectory_zero_rates_gives_zero_curve_and_no_feed_is_monotone() {
    let dir = prepared_solution();

    // Hand-built all-zero schedule in the documented schema.
    let solution =
        parse_solution_bytes(&std::fs::read(dir.path().join("solution.json")).unwrap()).unwrap();
    let mut zero = solution;
    zero.rates = vec![0.0; 4];
    let bytes = serde_json::to_vec_pretty(&zero).unwrap();
    std::fs::write(dir.path().join("zero.json"), bytes).unwrap();
    assert_success(&run_in(
        dir.path(),
        &[
            "trajectory",
            "--solution",
            "zero.json",
            "--profiles",
            "profiles.json",
            "--follower",
            "bob",
            "--out",
            "zero.csv",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("zero.csv")).unwrap();
    for line in csv.lines().skip(3) {
        let f: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(f, 0.0, "zero schedule must give a zero curve");
    }

    // carol follows only alice, so her feed is empty: with a real schedule
    // the probability never decreases.
    assert_success(&run_in(
        dir.path(),
        &[
            "trajectory",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--follower",
            "carol",
            "--out",
            "carol.csv",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("carol.csv")).unwrap();
    let mut previous = -1.0;
    for line in csv.lines().skip(3) {
        let f: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(
            f >= previous - 1e-12,
            "monotonicity violated: {f} after {previous}"
        );
        previous = f;
    }

    // Unknown follower is a validation error.
    let out = run_in(
        dir.path(),
        &[
            "trajectory",
            "--solution",
            "solution.json",
            "--profiles",
            "profiles.json",
            "--follower",
            "mallory",
            "--out",
            "m.csv",
        ],
    );
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = stage_fixtures();
    std::fs::write(dir.path().join("run.toml"), b"pieces = 2\ngrid_hours = 12.0\n").unwrap();
    assert_success(&run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--config",
            "run.toml",
            "--out",
            "p.json",
        ],
    ));
    let profiles = read_profiles(&dir.path().join("p.json")).unwrap();
    assert_eq!(profiles.grid.pieces, 2);
    assert_eq!(profiles.grid.horizon, 12.0);

    // A flag beats the file.
    assert_success(&run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--config",
            "run.toml",
            "--pieces",
            "6",
            "--out",
            "p2.json",
        ],
    ));
    let profiles = read_profiles(&dir.path().join("p2.json")).unwrap();
    assert_eq!(profiles.grid.pieces, 6);
    assert_eq!(profiles.grid.horizon, 12.0);

    // Unknown config keys are rejected.
    std::fs::write(dir.path().join("bad.toml"), b"piece_count = 2\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.tsv",
            "--graph",
            "graph.tsv",
            "--config",
            "bad.toml",
            "--out",
            "p3.json",
        ],
    );
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn single_follower_problem_round_trips_through_cli() {
    // Build a profiles file programmatically, solve through the CLI, and
    // confirm the stored problem solves identically in-process.
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::new(8.0, 4).unwrap();
    let mut profiles = ProfilesFile::new(grid);
    let mut network = feedshape::Network::default();
    let u = UserId::new("u").unwrap();
    let v = UserId::new("v").unwrap();
    network.add_edge(u.clone(), v.clone()).unwrap();
    profiles.users.insert(
        u.clone(),
        feedshape::formats::StoredProfile {
            mu: vec![0.0; 4],
            s: vec![0.0; 4],
            training_periods: 1,
            events_per_period: 3.0,
        },
    );
    profiles.users.insert(
        v.clone(),
        feedshape::formats::StoredProfile {
            mu: vec![2.0, 0.5, 1.0, 0.25],
            s: vec![1.0, 0.5, 0.25, 1.0],
            training_periods: 1,
            events_per_period: 4.0,
        },
    );
    profiles.set_network(&network);
    write_profiles(&dir.path().join("p.json"), &profiles).unwrap();

    assert_success(&run_in(
        dir.path(),
        &[
            "optimize",
            "--profiles",
            "p.json",
            "--broadcaster",
            "u",
            "--k",
            "2",
            "--budget",
            "1.5",
            "--out",
            "s.json",
        ],
    ));
    let solution =
        parse_solution_bytes(&std::fs::read(dir.path().join("s.json")).unwrap()).unwrap();
    let problem = profiles
        .problem(&u, 2, Some(1.5), Objective::AverageVisibility)
        .unwrap();
    let expected = solve_avm(&problem, &SolveOptions::default()).unwrap();
    assert_eq!(solution.rates, expected.rates);
    assert_eq!(solution.objective_value, expected.objective_value);
    assert_eq!(solution.k, 2);
    assert_eq!(solution.budget, 1.5);
}
