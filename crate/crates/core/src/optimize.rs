//! Budgeted posting-schedule optimization.
//!
//! Given a broadcaster with a posting budget of `C` expected stories per
//! horizon and a set of followers (each with a competing-feed rate `mu_v`
//! and an attention profile `s_v`), choose the piecewise-constant posting
//! rate that maximizes either
//!
//! * the **total** attention-weighted top-`k` visibility summed over
//!   followers, or
//! * the **minimum-side total** — the sum over the `n` worst-off
//!   followers.
//!
//! The feasible set is `{lambda >= 0, delta * sum(lambda) <= C}`. Both
//! objectives are concave in the posting masses (visibility of each
//! follower is concave: raising the posting rate has diminishing returns),
//! so projected gradient ascent finds the global optimum of the average
//! objective, and projected supergradient ascent with diminishing steps
//! handles the nonsmooth minimum objective.
//!
//! Gradients are exact. For `k = 1` a forward/backward sweep computes all
//! `M` partial derivatives in `O(M)` per follower; for general `k` the
//! per-piece closed form is differentiated and boundary sensitivities are
//! propagated forward (`O(M^2 k^2)` per follower). Both paths and a central
//! finite-difference check are held against each other in the tests.
//!
//! All internal arithmetic uses the dimensionless per-piece *masses*
//! `xi_m = lambda_m * delta`; public APIs speak rates (posts per hour) and
//! convert at the boundary.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, PiecewiseConstantFn, TimeGrid};
use crate::math::CompensatedSum;
use crate::network::UserId;
use crate::seeds::{derive_rng, stream};
use crate::visibility::{exp_moments_into, steady_states_into, MassChain};

/// One follower of the broadcaster being optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Follower {
    id: UserId,
    mu: PiecewiseConstantFn,
    s: PiecewiseConstantFn,
}

impl Follower {
    /// Bundles a follower's competing-feed rate and attention profile.
    ///
    /// Both functions must share a grid, and attention values must be
    /// probabilities (at most 1, up to rounding slack).
    pub fn new(id: UserId, mu: PiecewiseConstantFn, s: PiecewiseConstantFn) -> Result<Self> {
        check_same_grid(mu.grid(), s.grid())?;
        let capped: Vec<f64> = s
            .values()
            .iter()
            .map(|&v| {
                if v > 1.0 + 1e-9 {
                    Err(Error::invalid(format!(
                        "attention value {v} exceeds 1 for follower {id}"
                    )))
                } else {
                    Ok(v.min(1.0))
                }
            })
            .collect::<Result<_>>()?;
        let s = PiecewiseConstantFn::new(s.grid(), capped)?;
        Ok(Follower { id, mu, s })
    }

    /// Follower identity.
    pub fn id(&self) -> &UserId {
        &self.id
    }

    /// Competing-feed rate (posts per hour, excluding the broadcaster).
    pub fn mu(&self) -> &PiecewiseConstantFn {
        &self.mu
    }

    /// Attention profile (probability of being online, per piece).
    pub fn s(&self) -> &PiecewiseConstantFn {
        &self.s
    }
}

/// What the solver maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Total attention-weighted visibility summed over all followers.
    AverageVisibility,
    /// Sum over the `worst` least-visible followers (`worst = 1` is the
    /// plain minimum; `worst = |followers|` recovers the total).
    MinimumVisibility {
        /// How many worst-off followers the objective sums.
        worst: usize,
    },
}

/// A fully specified optimization instance.
#[derive(Debug, Clone)]
pub struct BroadcastProblem {
    grid: TimeGrid,
    followers: Vec<Follower>,
    k: usize,
    budget: f64,
    objective: Objective,
}

impl BroadcastProblem {
    /// Validates and bundles an instance.
    ///
    /// Requirements: at least one follower, all follower functions on
    /// `grid`, `k >= 1`, a positive finite budget, and for the minimum
    /// objective `1 <= worst <= |followers|`.
    pub fn new(
        grid: TimeGrid,
        followers: Vec<Follower>,
        k: usize,
        budget: f64,
        objective: Objective,
    ) -> Result<Self> {
        if followers.is_empty() {
            return Err(Error::invalid("problem needs at least one follower"));
        }
        for f in &followers {
            check_same_grid(grid, f.mu.grid())?;
        }
        if k == 0 {
            return Err(Error::invalid("rank threshold k must be at least 1"));
        }
        if !budget.is_finite() || budget <= 0.0 {
            return Err(Error::invalid(format!(
                "posting budget must be positive and finite, got {budget}"
            )));
        }
        if let Objective::MinimumVisibility { worst } = objective {
            if worst == 0 || worst > followers.len() {
                return Err(Error::invalid(format!(
                    "worst-follower count {worst} outside 1..={}",
                    followers.len()
                )));
            }
        }
        Ok(BroadcastProblem {
            grid,
            followers,
            k,
            budget,
            objective,
        })
    }

    /// The shared time grid.
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// The followers.
    pub fn followers(&self) -> &[Follower] {
        &self.followers
    }

    /// Rank threshold.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Budget: expected stories per horizon (`delta * sum(rates) <= budget`).
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Objective being maximized.
    pub fn objective(&self) -> Objective {
        self.objective
    }
}

/// Tuning knobs for the solvers; the defaults are what the library is
/// tested with.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Hard iteration cap.
    pub max_iterations: usize,
    /// Relative objective-change threshold for convergence.
    pub relative_tolerance: f64,
    /// Consecutive below-threshold iterations required to declare
    /// convergence.
    pub patience: usize,
    /// Backtracking shrink factor for the line search.
    pub armijo_shrink: f64,
    /// Sufficient-increase slope for the line search.
    pub armijo_slope: f64,
    /// Initial line-search step (in mass space).
    pub initial_step: f64,
    /// Smallest step tried before the line search declares stationarity.
    pub min_step: f64,
    /// Base step for the diminishing-step (minimum-objective) solver;
    /// `None` scales it automatically from the first supergradient.
    pub minimum_base_step: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 10_000,
            relative_tolerance: 1e-8,
            patience: 5,
            armijo_shrink: 0.5,
            armijo_slope: 1e-4,
            initial_step: 1.0,
            min_step: 1e-18,
            minimum_base_step: None,
        }
    }
}

/// Result of a solve: the schedule, its value, and the ascent trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Optimized posting rates, posts per hour per piece.
    pub rates: Vec<f64>,
    /// Objective value attained.
    pub objective_value: f64,
    /// Attention-weighted visibility of every follower at `rates`.
    pub per_follower: Vec<(UserId, f64)>,
    /// Iterations performed.
    pub iterations: usize,
    /// True when the stopping rule fired (rather than the iteration cap).
    pub converged: bool,
    /// Objective value after each iteration, starting with the initial
    /// point's value.
    pub trace: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Exact gradient of top-1 visibility `V(1)` with respect to each posting
/// rate `lambda_m` (units: hours per (post/hour)).
///
/// Computed by the `O(M)` two-sweep scheme: a forward pass accumulates each
/// piece's boundary value and local derivatives, a backward pass folds in
/// how raising a piece's rate lifts the boundary value seen by every later
/// piece.
pub fn gradient_v1(lambda: &PiecewiseConstantFn, mu: &PiecewiseConstantFn) -> Result<Vec<f64>> {
    check_same_grid(lambda.grid(), mu.grid())?;
    let delta = lambda.grid().delta();
    let c: Vec<f64> = lambda.values().iter().map(|v| v * delta).collect();
    let b: Vec<f64> = mu.values().iter().map(|v| v * delta).collect();
    let mut out = vec![0.0; c.len()];
    gradient_masses_top1(&c, &b, None, &mut out);
    Ok(out.into_iter().map(|g| g * delta * delta).collect())
}

/// Exact gradient of top-`k` visibility `V(k)` with respect to each posting
/// rate, by forward propagation of boundary sensitivities.
pub fn gradient_vk(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    k: usize,
) -> Result<Vec<f64>> {
    check_same_grid(lambda.grid(), mu.grid())?;
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    let delta = lambda.grid().delta();
    let c: Vec<f64> = lambda.values().iter().map(|v| v * delta).collect();
    let b: Vec<f64> = mu.values().iter().map(|v| v * delta).collect();
    let mut workspace = GradientWorkspace::new(k);
    let mut out = vec![0.0; c.len()];
    workspace.gradient(&c, &b, None, &mut out);
    Ok(out.into_iter().map(|g| g * delta * delta).collect())
}

/// `O(M)` gradient of the (attention-weighted) top-1 visibility in mass
/// coordinates: `out[m] = d/d c_m of sum_j s_j * integral_j(f_1)`.
fn gradient_masses_top1(c: &[f64], b: &[f64], s: Option<&[f64]>, out: &mut [f64]) {
    let m = c.len();
    debug_assert_eq!(b.len(), m);
    debug_assert_eq!(out.len(), m);
    // Forward sweep: per-piece local derivative `local`, boundary
    // sensitivity `lift` (d y_m / d c_m), entry-value response `entry_gain`
    // (d integral_m / d y_{m-1} = E_0) and boundary decay e^{-A}.
    let mut local = vec![0.0; m];
    let mut lift = vec![0.0; m];
    let mut entry_gain = vec![0.0; m];
    let mut decay = vec![0.0; m];
    let mut moments = Vec::with_capacity(3);
    let mut y = 0.0;
    for i in 0..m {
        let a = b[i] + c[i];
        if a == 0.0 {
            // Empty piece: the state freezes; derivatives are the limits of
            // the closed form as the posting mass tends to zero.
            local[i] = (1.0 - y) / 2.0;
            lift[i] = 1.0 - y;
            entry_gain[i] = 1.0;
            decay[i] = 1.0;
            continue;
        }
        let steady = c[i] / a;
        let growth = b[i] / (a * a); // d steady / d c
        exp_moments_into(a, 1, &mut moments);
        let (e0, e1) = (moments[0], moments[1]);
        let fade = (-a).exp();
        local[i] = growth * (1.0 - e0) - (y - steady) * e1;
        lift[i] = growth - (y - steady + growth) * fade;
        entry_gain[i] = e0;
        decay[i] = fade;
        y = steady + (y - steady) * fade;
    }
    // Backward sweep: `tail[i]` is how one unit of boundary value at the
    // end of piece i propagates into all later pieces' weighted integrals.
    let weight = |i: usize| s.map_or(1.0, |w| w[i]);
    let mut tail = 0.0;
    for i in (0..m).rev() {
        out[i] = weight(i) * local[i] + lift[i] * tail;
        if i > 0 {
            tail = weight(i) * entry_gain[i] + decay[i] * tail;
        }
    }
}

/// Scratch and state for the general-`k` gradient: forward sensitivity
/// propagation of every boundary value with respect to every posting mass.
struct GradientWorkspace {
    k: usize,
    h: Vec<f64>,
    beta: Vec<f64>,
    growth: Vec<f64>,
    weights: Vec<f64>,
    moments: Vec<f64>,
    diff: Vec<f64>,
    /// `sens[n]` holds d h_j / d c_n for the pieces seen so far.
    sens: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl GradientWorkspace {
    fn new(k: usize) -> Self {
        assert!(k >= 1);
        GradientWorkspace {
            k,
            h: vec![0.0; k],
            beta: vec![0.0; k],
            growth: vec![0.0; k],
            weights: vec![0.0; k],
            moments: Vec::with_capacity(k + 1),
            diff: vec![0.0; k],
            sens: Vec::new(),
            scratch: vec![0.0; k],
        }
    }

    /// Computes `out[n] = d/d c_n of sum_m s_m * integral_m(f_k)` in mass
    /// coordinates.
    fn gradient(&mut self, c: &[f64], b: &[f64], s: Option<&[f64]>, out: &mut [f64]) {
        let k = self.k;
        let pieces = c.len();
        debug_assert_eq!(b.len(), pieces);
        debug_assert_eq!(out.len(), pieces);
        out.fill(0.0);
        self.h.fill(0.0);
        self.sens.resize(pieces, Vec::new());
        for row in &mut self.sens {
            row.clear();
            row.resize(k, 0.0);
        }

        for m in 0..pieces {
            let sw = s.map_or(1.0, |w| w[m]);
            let a = b[m] + c[m];
            if a == 0.0 {
                // Frozen piece: integral is h_k; only its own limit
                // derivative and pass-through sensitivities apply.
                out[m] += sw * (1.0 - self.h[k - 1]) / 2.0;
                for (slot, sens) in out.iter_mut().zip(&self.sens).take(m) {
                    *slot += sw * sens[k - 1];
                }
                for (j, slot) in self.sens[m].iter_mut().enumerate() {
                    *slot = 1.0 - self.h[j];
                }
                continue;
            }

            steady_states_into(b[m], c[m], &mut self.beta);
            exp_moments_into(a, k, &mut self.moments);
            let fade = (-a).exp();
            // weights[i] = b^i / i!; growth[j] = d beta_{j+1} / d c.
            let mut w = 1.0;
            for i in 0..k {
                self.weights[i] = w;
                w *= b[m] / (i + 1) as f64;
                self.diff[i] = self.h[i] - self.beta[i];
                self.growth[i] = (i + 1) as f64 * (1.0 - self.beta[i]) / a;
            }

            // Direct derivative of this piece's integral in its own mass.
            let mut direct = CompensatedSum::new();
            direct.add(self.growth[k - 1]);
            for i in 0..k {
                direct.add(
                    -self.weights[i]
                        * (self.growth[k - 1 - i] * self.moments[i]
                            + self.diff[k - 1 - i] * self.moments[i + 1]),
                );
            }
            out[m] += sw * direct.value();

            // Chain rule through the entry values for earlier pieces:
            // d integral / d h_{l} = weights[k-l] * E_{k-l} (1-based l).
            for (slot, sens) in out.iter_mut().zip(&self.sens).take(m) {
                let mut acc = CompensatedSum::new();
                for (l, &entry_sens) in sens.iter().enumerate().take(k) {
                    acc.add(entry_sens * self.weights[k - 1 - l] * self.moments[k - 1 - l]);
                }
                *slot += sw * acc.value();
            }

            // Push sensitivities through the exit map
            // y_j = beta_j + fade * sum_{i<j} weights[i] * diff[j-i]:
            // d y_j / d h_l = fade * weights[j-l].
            for n in 0..m {
                for j in (0..k).rev() {
                    let mut acc = CompensatedSum::new();
                    for l in 0..=j {
                        acc.add(self.weights[j - l] * self.sens[n][l]);
                    }
                    self.scratch[j] = fade * acc.value();
                }
                self.sens[n].copy_from_slice(&self.scratch);
            }
            // This piece's own boundary sensitivity:
            // d y_j / d c = growth_j - fade * sum_{i<=j} weights[i] *
            //               (diff[j-i] + growth[j-i]).
            for j in 0..k {
                let mut acc = CompensatedSum::new();
                for i in 0..=j {
                    acc.add(self.weights[i] * (self.diff[j - i] + self.growth[j - i]));
                }
                self.sens[m][j] = self.growth[j] - fade * acc.value();
            }

            // Advance the boundary values.
            for j in (0..k).rev() {
                let mut acc = CompensatedSum::new();
                for i in 0..=j {
                    acc.add(self.weights[i] * self.diff[j - i]);
                }
                self.scratch[j] = (fade * acc.value() + self.beta[j]).clamp(0.0, 1.0);
            }
            self.h.copy_from_slice(&self.scratch);
        }
    }
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

/// Euclidean projection of a rate vector onto the feasible set
/// `{lambda >= 0, delta * sum(lambda) <= budget}`.
///
/// If clipping negatives already satisfies the budget, that is the
/// projection; otherwise the budget is active and the result is the
/// standard water-filling `max(x - theta, 0)` with the threshold found by
/// one sort.
pub fn project_budget(rates: &[f64], budget: f64, delta: f64) -> Result<Vec<f64>> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::invalid(format!(
            "budget must be positive and finite, got {budget}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::invalid(format!(
            "piece width must be positive and finite, got {delta}"
        )));
    }
    if rates.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rates must be finite"));
    }
    let masses: Vec<f64> = rates.iter().map(|v| v * delta).collect();
    Ok(project_masses(&masses, budget)
        .into_iter()
        .map(|m| m / delta)
        .collect())
}

/// Projection in mass coordinates onto `{x >= 0, sum(x) <= bound}`.
fn project_masses(x: &[f64], bound: f64) -> Vec<f64> {
    let clipped_sum: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped_sum <= bound {
        return x.iter().map(|v| v.max(0.0)).collect();
    }
    // Budget is active: project onto the simplex face sum(x) = bound.
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite masses"));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - bound) / (j + 1) as f64;
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

// ---------------------------------------------------------------------------
// Objective evaluation
// ---------------------------------------------------------------------------

/// Per-follower mass-space view of a problem, precomputed once per solve.
struct MassProblem {
    delta: f64,
    pieces: usize,
    k: usize,
    /// Per follower: feed masses and attention values.
    feeds: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MassProblem {
    fn new(problem: &BroadcastProblem) -> Self {
        let delta = problem.grid().delta();
        let feeds = problem
            .followers()
            .iter()
            .map(|f| {
                let b: Vec<f64> = f.mu().values().iter().map(|v| v * delta).collect();
                let s = f.s().values().to_vec();
                (b, s)
            })
            .collect();
        MassProblem {
            delta,
            pieces: problem.grid().pieces(),
            k: problem.k(),
            feeds,
        }
    }

    /// Attention-weighted visibility (hours) of every follower at posting
    /// masses `xi`, in follower order.
    fn follower_values(&self, xi: &[f64]) -> Vec<f64> {
        self.feeds
            .par_iter()
            .map(|(b, s)| {
                let mut chain = MassChain::new(self.k);
                self.delta * chain.weighted_value(xi, b, Some(s))
            })
            .collect()
    }

    /// Sum of the selected followers' visibility gradients (mass space,
    /// physical hours — includes the `delta` from the time integral).
    fn summed_gradient(&self, xi: &[f64], selected: &[usize]) -> Vec<f64> {
        let per_follower: Vec<Vec<f64>> = selected
            .par_iter()
            .map(|&idx| {
                let (b, s) = &self.feeds[idx];
                let mut out = vec![0.0; self.pieces];
                if self.k == 1 {
                    gradient_masses_top1(xi, b, Some(s), &mut out);
                } else {
                    let mut workspace = GradientWorkspace::new(self.k);
                    workspace.gradient(xi, b, Some(s), &mut out);
                }
                out
            })
            .collect();
        let mut total = vec![0.0; self.pieces];
        for (m, slot) in total.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for row in &per_follower {
                acc.add(row[m]);
            }
            *slot = acc.value() * self.delta;
        }
        total
    }
}

/// Indices of the `n` smallest values, ties broken by index (ascending).
fn worst_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite visibility")
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order
}

/// Objective value implied by per-follower visibilities.
fn objective_from_values(objective: Objective, values: &[f64]) -> f64 {
    match objective {
        Objective::AverageVisibility => {
            let mut acc = CompensatedSum::new();
            for &v in values {
                acc.add(v);
            }
            acc.value()
        }
        Objective::MinimumVisibility { worst } => {
            let idx = worst_indices(values, worst);
            let mut acc = CompensatedSum::new();
            for &i in &idx {
                acc.add(values[i]);
            }
            acc.value()
        }
    }
}

/// Evaluates a problem's objective at an arbitrary rate vector (which need
/// not be feasible — useful for comparing baselines and external
/// schedules).
pub fn objective_value(problem: &BroadcastProblem, rates: &[f64]) -> Result<f64> {
    let values = follower_values_for_rates(problem, rates)?;
    Ok(objective_from_values(problem.objective(), &values))
}

/// Attention-weighted visibility of every follower under `rates`.
pub fn per_follower_visibility(
    problem: &BroadcastProblem,
    rates: &[f64],
) -> Result<Vec<(UserId, f64)>> {
    let values = follower_values_for_rates(problem, rates)?;
    Ok(problem
        .followers()
        .iter()
        .map(|f| f.id().clone())
        .zip(values)
        .collect())
}

fn follower_values_for_rates(problem: &BroadcastProblem, rates: &[f64]) -> Result<Vec<f64>> {
    if rates.len() != problem.grid().pieces() {
        return Err(Error::invalid(format!(
            "expected {} rates, got {}",
            problem.grid().pieces(),
            rates.len()
        )));
    }
    if rates.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("rates must be finite and nonnegative"));
    }
    let mass_problem = MassProblem::new(problem);
    let xi: Vec<f64> = rates.iter().map(|v| v * mass_problem.delta).collect();
    Ok(mass_problem.follower_values(&xi))
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Maximizes the **total** attention-weighted visibility (summed over
/// followers) by projected gradient ascent with Armijo backtracking.
///
/// Starts from the uniform feasible schedule, ascends the exact gradient,
/// and stops when the relative objective change stays below
/// `relative_tolerance` for `patience` consecutive iterations (or at the
/// iteration cap). The trace is nondecreasing by construction of the line
/// search.
pub fn solve_avm(problem: &BroadcastProblem, options: &SolveOptions) -> Result<Solution> {
    validate_options(options)?;
    let mass_problem = MassProblem::new(problem);
    let all: Vec<usize> = (0..problem.followers().len()).collect();

    let mut xi = vec![problem.budget() / mass_problem.pieces as f64; mass_problem.pieces];
    let mut values = mass_problem.follower_values(&xi);
    let mut current = objective_from_values(Objective::AverageVisibility, &values);
    let mut trace = vec![current];
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..options.max_iterations {
        iterations += 1;
        let gradient = mass_problem.summed_gradient(&xi, &all);

        // Backtracking line search along the projected arc.
        let mut step = options.initial_step;
        let mut accepted = false;
        let mut next_xi = xi.clone();
        let mut next_values = values.clone();
        let mut next_value = current;
        while step >= options.min_step {
            let candidate: Vec<f64> = xi
                .iter()
                .zip(&gradient)
                .map(|(x, g)| x + step * g)
                .collect();
            let projected = project_masses(&candidate, problem.budget());
            let movement: f64 = projected
                .iter()
                .zip(&xi)
                .zip(&gradient)
                .map(|((p, x), g)| (p - x) * g)
                .sum();
            let trial_values = mass_problem.follower_values(&projected);
            let trial = objective_from_values(Objective::AverageVisibility, &trial_values);
            if trial >= current + options.armijo_slope * movement {
                next_xi = projected;
                next_values = trial_values;
                next_value = trial;
                accepted = true;
                break;
            }
            step *= options.armijo_shrink;
        }
        if !accepted {
            // No step of any size makes progress: stationary point.
            converged = true;
            break;
        }

        let change = relative_change(next_value, current);
        xi = next_xi;
        values = next_values;
        current = next_value;
        trace.push(current);
        if change < options.relative_tolerance {
            streak += 1;
            if streak >= options.patience {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }

    Ok(finish_solution(
        problem,
        &mass_problem,
        xi,
        values,
        current,
        iterations,
        converged,
        trace,
    ))
}

/// Maximizes the **minimum-side** objective (sum over the `worst`
/// least-visible followers) by projected supergradient ascent with
/// diminishing steps `base / sqrt(t)`, returning the best iterate seen.
pub fn solve_mvm(problem: &BroadcastProblem, options: &SolveOptions) -> Result<Solution> {
    validate_options(options)?;
    let worst = match problem.objective() {
        Objective::MinimumVisibility { worst } => worst,
        Objective::AverageVisibility => {
            return Err(Error::invalid(
                "solve_mvm requires a minimum-visibility objective",
            ))
        }
    };
    let mass_problem = MassProblem::new(problem);

    let mut xi = vec![problem.budget() / mass_problem.pieces as f64; mass_problem.pieces];
    let mut values = mass_problem.follower_values(&xi);
    let mut current = objective_from_values(problem.objective(), &values);
    let mut best_xi = xi.clone();
    let mut best_values = values.clone();
    let mut best = current;
    let mut trace = vec![current];
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut base_step = options.minimum_base_step;

    for t in 1..=options.max_iterations {
        iterations = t;
        let active = worst_indices(&values, worst);
        let gradient = mass_problem.summed_gradient(&xi, &active);
        let base = *base_step.get_or_insert_with(|| {
            // First-iteration scaling: the initial step may move a
            // coordinate by about half the budget.
            let peak = gradient.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
            if peak > 0.0 {
                0.5 * problem.budget() / peak
            } else {
                1.0
            }
        });
        let step = base / (t as f64).sqrt();
        let candidate: Vec<f64> = xi
            .iter()
            .zip(&gradient)
            .map(|(x, g)| x + step * g)
            .collect();
        xi = project_masses(&candidate, problem.budget());
        values = mass_problem.follower_values(&xi);
        let next = objective_from_values(problem.objective(), &values);
        if next > best {
            best = next;
            best_xi = xi.clone();
            best_values = values.clone();
        }
        let change = relative_change(next, current);
        current = next;
        trace.push(current);
        if change < options.relative_tolerance {
            streak += 1;
            if streak >= options.patience {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }

    Ok(finish_solution(
        problem,
        &mass_problem,
        best_xi,
        best_values,
        best,
        iterations,
        converged,
        trace,
    ))
}

fn validate_options(options: &SolveOptions) -> Result<()> {
    if options.max_iterations == 0 {
        return Err(Error::invalid("max_iterations must be at least 1"));
    }
    if options.relative_tolerance <= 0.0 || options.relative_tolerance.is_nan() {
        return Err(Error::invalid("relative_tolerance must be positive"));
    }
    if options.patience == 0 {
        return Err(Error::invalid("patience must be at least 1"));
    }
    if options.armijo_shrink <= 0.0 || options.armijo_shrink >= 1.0 || options.armijo_shrink.is_nan()
    {
        return Err(Error::invalid("armijo_shrink must lie in (0, 1)"));
    }
    if options.armijo_slope <= 0.0 || options.armijo_slope >= 1.0 || options.armijo_slope.is_nan() {
        return Err(Error::invalid("armijo_slope must lie in (0, 1)"));
    }
    if options.initial_step <= 0.0
        || options.initial_step.is_nan()
        || options.min_step <= 0.0
        || options.min_step.is_nan()
    {
        return Err(Error::invalid("line-search steps must be positive"));
    }
    if let Some(base) = options.minimum_base_step {
        if base <= 0.0 || !base.is_finite() {
            return Err(Error::invalid("minimum_base_step must be positive"));
        }
    }
    Ok(())
}

fn relative_change(next: f64, previous: f64) -> f64 {
    (next - previous).abs() / next.abs().max(previous.abs()).max(1e-12)
}

#[allow(clippy::too_many_arguments)]
fn finish_solution(
    problem: &BroadcastProblem,
    mass_problem: &MassProblem,
    xi: Vec<f64>,
    values: Vec<f64>,
    objective_value: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Solution {
    let rates = xi.iter().map(|m| m / mass_problem.delta).collect();
    let per_follower = problem
        .followers()
        .iter()
        .map(|f| f.id().clone())
        .zip(values)
        .collect();
    Solution {
        rates,
        objective_value,
        per_follower,
        iterations,
        converged,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Reference allocation strategies the optimizer is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Uniformly random budget split (average-objective flavor).
    RandomAvm,
    /// Budget split proportional to the total feed intensity per piece.
    IntensityAvm,
    /// Budget split proportional to attention-weighted feed intensity.
    PopularityAvm,
    /// Uniformly random budget split (minimum-objective flavor).
    RandomMvm,
    /// Intensity-proportional split (minimum-objective flavor).
    IntensityMvm,
    /// `worst` rounds of single-follower optimization, each targeting the
    /// currently least-visible follower with budget `C / worst`.
    GreedyMvm,
}

impl BaselineKind {
    fn stream_label(self) -> u64 {
        match self {
            BaselineKind::RandomAvm => 0,
            BaselineKind::IntensityAvm => 1,
            BaselineKind::PopularityAvm => 2,
            BaselineKind::RandomMvm => 3,
            BaselineKind::IntensityMvm => 4,
            BaselineKind::GreedyMvm => 5,
        }
    }
}

/// Produces a baseline schedule (posts per hour per piece) spending the
/// full budget. Random baselines draw a symmetric Dirichlet split from the
/// seed; intensity/popularity baselines are deterministic; the greedy
/// baseline runs `worst` single-follower solves and requires a
/// minimum-visibility objective.
pub fn baseline_allocate(
    problem: &BroadcastProblem,
    kind: BaselineKind,
    seed: u64,
) -> Result<Vec<f64>> {
    let pieces = problem.grid().pieces();
    let delta = problem.grid().delta();
    let weights: Vec<f64> = match kind {
        BaselineKind::RandomAvm | BaselineKind::RandomMvm => {
            // Normalized Exp(1) draws are a symmetric Dirichlet sample.
            let mut rng = derive_rng(seed, &[stream::BASELINE, kind.stream_label()]);
            let exp = rand_distr::Exp::new(1.0).expect("unit rate");
            (0..pieces)
                .map(|_| rand_distr::Distribution::sample(&exp, &mut rng))
                .collect()
        }
        BaselineKind::IntensityAvm | BaselineKind::IntensityMvm => (0..pieces)
            .map(|m| {
                problem
                    .followers()
                    .iter()
                    .map(|f| f.mu().values()[m])
                    .sum()
            })
            .collect(),
        BaselineKind::PopularityAvm => (0..pieces)
            .map(|m| {
                problem
                    .followers()
                    .iter()
                    .map(|f| f.s().values()[m] * f.mu().values()[m])
                    .sum()
            })
            .collect(),
        BaselineKind::GreedyMvm => return greedy_minimum(problem, seed),
    };
    let total: f64 = weights.iter().sum();
    let masses: Vec<f64> = if total <= f64::MIN_POSITIVE {
        // Degenerate weights (e.g. all-zero feeds): fall back to uniform.
        vec![problem.budget() / pieces as f64; pieces]
    } else {
        weights
            .iter()
            .map(|w| problem.budget() * w / total)
            .collect()
    };
    Ok(masses.into_iter().map(|m| m / delta).collect())
}

/// Greedy minimum-visibility baseline: repeatedly finds the least-visible
/// follower under the schedule accumulated so far (starting from the
/// uniform one) and adds a single-follower optimal schedule with an equal
/// share of the budget. The uniform probe schedule itself is *not* part of
/// the output, so the result stays within budget.
fn greedy_minimum(problem: &BroadcastProblem, seed: u64) -> Result<Vec<f64>> {
    let worst = match problem.objective() {
        Objective::MinimumVisibility { worst } => worst,
        Objective::AverageVisibility => {
            return Err(Error::invalid(
                "greedy baseline requires a minimum-visibility objective",
            ))
        }
    };
    let _ = seed; // deterministic; seed accepted for interface uniformity
    let pieces = problem.grid().pieces();
    let delta = problem.grid().delta();
    let share = problem.budget() / worst as f64;
    let mass_problem = MassProblem::new(problem);

    let mut probe = vec![problem.budget() / pieces as f64; pieces];
    let mut total = vec![0.0; pieces];
    for _ in 0..worst {
        let values = mass_problem.follower_values(&probe);
        let target = worst_indices(&values, 1)[0];
        let follower = &problem.followers()[target];
        let single = BroadcastProblem::new(
            problem.grid(),
            vec![follower.clone()],
            problem.k(),
            share,
            Objective::AverageVisibility,
        )?;
        let solution = solve_avm(&single, &SolveOptions::default())?;
        for m in 0..pieces {
            let mass = solution.rates[m] * delta;
            total[m] += mass;
            probe[m] += mass;
        }
    }
    Ok(total.into_iter().map(|m| m / delta).collect())
}
