//! Exact top-`k` visibility for piecewise-constant intensities.
//!
//! Fix one follower. The broadcaster posts at rate `lambda(t)` and the rest
//! of the follower's feed arrives at rate `mu(t)`. Let `f_k(t)` be the
//! probability that the broadcaster's most recent story sits among the top
//! `k` feed slots at time `t`. Between jumps of the piecewise-constant
//! rates, `f_k` obeys the coupled linear system
//!
//! ```text
//! f_1' = -(mu + lambda) f_1 + lambda
//! f_k' = -(mu + lambda) f_k + mu f_{k-1} + lambda      (k >= 2)
//! ```
//!
//! (a fresh post jumps straight to rank 1; every competing story demotes by
//! one rank). On a single piece of width `delta`, rescale time to `[0, 1]`
//! and write `c = lambda * delta`, `b = mu * delta` for the posting and feed
//! *masses*, `A = b + c`. Solving the system level by level gives the exact
//! representation
//!
//! ```text
//! f_j(t) = exp(-A t) * sum_{i=0}^{j-1} alpha_{i,j} t^i  +  beta_j
//! beta_j     = 1 - (b / A)^j
//! alpha_{i,j} = (b^i / i!) * (h_{j-i} - beta_{j-i})
//! ```
//!
//! where `h_j = f_j(0)` are the entry values carried over from the previous
//! piece. The `beta_j` are the steady-state probabilities the system relaxes
//! to when the rates stay fixed. Integrals of `f_k` over the piece reduce to
//! the exponential moments `E_i(A) = integral of t^i exp(-A t) over [0,1]`,
//! evaluated by [`exp_moments_into`] with a branch chosen for numerical
//! stability in every regime.
//!
//! [`fk_trajectory`] chains pieces over the whole horizon,
//! [`visibility`]/[`weighted_visibility`] integrate the result, and
//! [`fk_quadrature_oracle`] recomputes `f_k(t)` by brute-force quadrature of
//! the equivalent renewal integral — an independent cross-check used
//! throughout the test suite.

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, PiecewiseConstantFn};
use crate::math::CompensatedSum;

/// Slack tolerated when validating that incoming boundary values are
/// probabilities and monotone in `k`; violations beyond it are errors.
const ENTRY_SLACK: f64 = 1e-9;

/// The exact solution of the rank system on one grid piece, in normalized
/// time `t` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSolution {
    b_mass: f64,
    c_mass: f64,
    /// Entry values `h_1 ..= h_k`.
    entry: Vec<f64>,
    /// Steady states `beta_1 ..= beta_k`; for the empty piece (`A == 0`)
    /// these are set to the entry values so the closed form still reads
    /// `f_j(t) = beta_j`.
    beta: Vec<f64>,
    /// Polynomial coefficients `alpha_{0,k} ..= alpha_{k-1,k}` of the top
    /// level; zero for the empty piece.
    alpha: Vec<f64>,
    /// Exit values `y_1 ..= y_k = f_j(1)`.
    exit: Vec<f64>,
}

impl IntervalSolution {
    /// Highest tracked rank `k`.
    pub fn k(&self) -> usize {
        self.entry.len()
    }

    /// Feed mass `b = mu * delta` on this piece.
    pub fn b_mass(&self) -> f64 {
        self.b_mass
    }

    /// Posting mass `c = lambda * delta` on this piece.
    pub fn c_mass(&self) -> f64 {
        self.c_mass
    }

    /// Entry values `h_1 ..= h_k`.
    pub fn entry(&self) -> &[f64] {
        &self.entry
    }

    /// Exit values `f_1(1) ..= f_k(1)`.
    pub fn exit(&self) -> &[f64] {
        &self.exit
    }

    /// Steady-state values `beta_1 ..= beta_k`.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Top-level polynomial coefficients `alpha_{0,k} ..= alpha_{k-1,k}`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `f_k(t)` at normalized time `t` in `[0, 1]`, clamped to `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_level(self.k(), t)
    }

    /// `f_j(t)` for any level `1 <= j <= k`, clamped to `[0, 1]`.
    ///
    /// Panics if `j` is out of range or `t` lies outside `[0, 1]` (beyond a
    /// tiny rounding slack).
    pub fn eval_level(&self, j: usize, t: f64) -> f64 {
        let t = checked_unit_time(t);
        assert!(j >= 1 && j <= self.k(), "rank level {j} out of range");
        let a = self.b_mass + self.c_mass;
        if a == 0.0 {
            return self.entry[j - 1];
        }
        let poly = self.level_polynomial(j, t, false);
        ((-a * t).exp() * poly + self.beta[j - 1]).clamp(0.0, 1.0)
    }

    /// Time derivative `f_j'(t)` in normalized time units.
    ///
    /// Same domain rules as [`Self::eval_level`]. Used mainly to verify that
    /// the closed form satisfies the rank system.
    pub fn derivative_level(&self, j: usize, t: f64) -> f64 {
        let t = checked_unit_time(t);
        assert!(j >= 1 && j <= self.k(), "rank level {j} out of range");
        let a = self.b_mass + self.c_mass;
        if a == 0.0 {
            return 0.0;
        }
        let poly = self.level_polynomial(j, t, false);
        let dpoly = self.level_polynomial(j, t, true);
        (-a * t).exp() * (dpoly - a * poly)
    }

    /// Evaluates the level-`j` polynomial (or its derivative) at `t`,
    /// rebuilding `alpha_{i,j} = (b^i / i!) (h_{j-i} - beta_{j-i})` on the
    /// fly so only the top level's coefficients need storing.
    fn level_polynomial(&self, j: usize, t: f64, derivative: bool) -> f64 {
        let mut weight = 1.0; // b^i / i!
        let mut power = 1.0; // t^i (or t^{i-1} for the derivative)
        let mut acc = CompensatedSum::new();
        for i in 0..j {
            let coeff = weight * (self.entry[j - 1 - i] - self.beta[j - 1 - i]);
            if derivative {
                if i > 0 {
                    acc.add(coeff * i as f64 * power);
                    power *= t;
                }
            } else {
                acc.add(coeff * power);
                power *= t;
            }
            weight *= self.b_mass / (i + 1) as f64;
        }
        acc.value()
    }
}

/// Validates `t` as normalized time and clamps rounding spill into `[0, 1]`.
fn checked_unit_time(t: f64) -> f64 {
    assert!(
        (-ENTRY_SLACK..=1.0 + ENTRY_SLACK).contains(&t),
        "normalized time {t} outside [0, 1]"
    );
    t.clamp(0.0, 1.0)
}

/// Solves the rank system on one piece with feed mass `b_mass`, posting
/// mass `c_mass`, and entry values `entry = [h_1, ..., h_k]`.
///
/// Entry values must be probabilities, nondecreasing in the rank level
/// (within rounding slack — they normally come from a previous piece's exit
/// values). Masses must be finite and nonnegative.
pub fn interval_coefficients(
    b_mass: f64,
    c_mass: f64,
    entry: &[f64],
) -> Result<IntervalSolution> {
    if !b_mass.is_finite() || b_mass < 0.0 {
        return Err(Error::invalid(format!(
            "feed mass must be finite and nonnegative, got {b_mass}"
        )));
    }
    if !c_mass.is_finite() || c_mass < 0.0 {
        return Err(Error::invalid(format!(
            "posting mass must be finite and nonnegative, got {c_mass}"
        )));
    }
    let k = entry.len();
    if k == 0 {
        return Err(Error::invalid("entry values must cover at least rank 1"));
    }
    let mut h = Vec::with_capacity(k);
    for (idx, &value) in entry.iter().enumerate() {
        if !value.is_finite() || !(-ENTRY_SLACK..=1.0 + ENTRY_SLACK).contains(&value) {
            return Err(Error::invalid(format!(
                "entry value h_{} = {value} is not a probability",
                idx + 1
            )));
        }
        let clamped = value.clamp(0.0, 1.0);
        if idx > 0 && clamped + ENTRY_SLACK < h[idx - 1] {
            return Err(Error::invalid(format!(
                "entry values must be nondecreasing in rank; h_{} = {} after h_{} = {}",
                idx + 1,
                value,
                idx,
                h[idx - 1]
            )));
        }
        let floor: f64 = if idx > 0 { h[idx - 1] } else { 0.0 };
        h.push(clamped.max(floor));
    }

    let a = b_mass + c_mass;
    if a == 0.0 {
        // Nothing arrives on this piece: every level holds its entry value.
        return Ok(IntervalSolution {
            b_mass,
            c_mass,
            beta: h.clone(),
            alpha: vec![0.0; k],
            exit: h.clone(),
            entry: h,
        });
    }

    let mut beta = vec![0.0; k];
    steady_states_into(b_mass, c_mass, &mut beta);

    // alpha_{i,k} for the top level, plus exit values for every level.
    let mut alpha = vec![0.0; k];
    let mut weight = 1.0; // b^i / i!
    for i in 0..k {
        alpha[i] = weight * (h[k - 1 - i] - beta[k - 1 - i]);
        weight *= b_mass / (i + 1) as f64;
    }

    let decay = (-a).exp();
    let mut exit = vec![0.0; k];
    for j in 1..=k {
        let mut weight = 1.0;
        let mut acc = CompensatedSum::new();
        for i in 0..j {
            acc.add(weight * (h[j - 1 - i] - beta[j - 1 - i]));
            weight *= b_mass / (i + 1) as f64;
        }
        let mut y = (decay * acc.value() + beta[j - 1]).clamp(0.0, 1.0);
        if j > 1 {
            // Monotonicity in the rank level holds exactly in the model;
            // enforce it against rounding so chained pieces stay valid.
            y = y.max(exit[j - 2]);
        }
        exit[j - 1] = y;
    }

    Ok(IntervalSolution {
        b_mass,
        c_mass,
        entry: h,
        beta,
        alpha,
        exit,
    })
}

/// Fills `out` with the steady states `beta_j = 1 - (b / A)^j`,
/// `j = 1 ..= out.len()`, for `A = b + c > 0`.
///
/// Evaluated as `-expm1(j * ln(b / A))` so the result stays accurate even
/// when `c` is many orders of magnitude below `b`.
pub(crate) fn steady_states_into(b_mass: f64, c_mass: f64, out: &mut [f64]) {
    debug_assert!(b_mass + c_mass > 0.0);
    if c_mass == 0.0 {
        out.fill(0.0);
        return;
    }
    if b_mass == 0.0 {
        out.fill(1.0);
        return;
    }
    // ln(b / A) = ln(1 - c / A), computed without cancellation.
    let log_ratio = (-c_mass / (b_mass + c_mass)).ln_1p();
    for (idx, slot) in out.iter_mut().enumerate() {
        *slot = -((idx + 1) as f64 * log_ratio).exp_m1();
    }
}

/// Fills `out` with the exponential moments
/// `E_i(a) = integral of t^i exp(-a t) dt over [0, 1]` for `i = 0 ..= highest`.
///
/// Two evaluation routes keep every regime stable:
///
/// * `a <= i + 1`: the everywhere-positive series
///   `E_i = exp(-a) * sum_m a^m i! / (i + m + 1)!`, immune to cancellation
///   for small and moderate `a`;
/// * `a > i + 1`: the complementary form
///   `E_i = (i! / a^{i+1}) * (1 - Q(i+1, a))` with `Q` the Poisson lower
///   tail, whose subtraction is harmless because `Q < 1/2` there.
///
/// For `a` beyond roughly 709, `exp(-a)` underflows and the moments round
/// to `i! / a^{i+1}`, which is correct to double precision.
pub(crate) fn exp_moments_into(a: f64, highest: usize, out: &mut Vec<f64>) {
    debug_assert!(a.is_finite() && a >= 0.0);
    out.clear();
    for i in 0..=highest {
        if a <= i as f64 + 1.0 {
            out.push(exp_moment_series(a, i));
        } else {
            out.push(exp_moment_tail(a, i));
        }
    }
}

/// Series route for `E_i(a)`; accurate whenever `a` is not much larger
/// than `i`.
fn exp_moment_series(a: f64, i: usize) -> f64 {
    if a == 0.0 {
        return 1.0 / (i as f64 + 1.0);
    }
    let mut term = 1.0 / (i as f64 + 1.0);
    let mut sum = term;
    for m in 1..1000 {
        term *= a / (i + 1 + m) as f64;
        sum += term;
        if term <= f64::EPSILON * sum {
            break;
        }
    }
    (-a).exp() * sum
}

/// Complementary route for `E_i(a)`, used when `a > i + 1`.
fn exp_moment_tail(a: f64, i: usize) -> f64 {
    // i! / a^{i+1} as a product of factors j / a < 1: no overflow, and
    // underflow to zero only when the moment itself is below f64 range.
    let mut factor = 1.0 / a;
    for j in 1..=i {
        factor *= j as f64 / a;
    }
    factor * (1.0 - regularized_gamma_q(i + 1, a))
}

/// Regularized upper incomplete gamma `Q(n, x) = Gamma(n, x) / (n-1)!` for
/// integer `n >= 1`, equal to the probability that a Poisson variable with
/// mean `x` is at most `n - 1`.
pub(crate) fn regularized_gamma_q(n: usize, x: f64) -> f64 {
    debug_assert!(n >= 1 && x >= 0.0);
    let mut term = (-x).exp();
    let mut sum = term;
    for j in 1..n {
        term *= x / j as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// Per-piece posting/feed masses of a rate function: `value * delta`.
fn masses(f: &PiecewiseConstantFn) -> Vec<f64> {
    let delta = f.grid().delta();
    f.values().iter().map(|v| v * delta).collect()
}

/// Chains the per-piece closed forms over the whole horizon, starting from
/// an empty feed (`f_j(0) = 0` for all levels).
///
/// Both rates must share one grid; `k >= 1`. Piece `m` of the result solves
/// the system on `[m * delta, (m+1) * delta)` in normalized local time.
pub fn fk_trajectory(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    k: usize,
) -> Result<Vec<IntervalSolution>> {
    check_same_grid(lambda.grid(), mu.grid())?;
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    let delta = lambda.grid().delta();
    let mut entry = vec![0.0; k];
    let mut pieces = Vec::with_capacity(lambda.grid().pieces());
    for (lam, mu_rate) in lambda.values().iter().zip(mu.values()) {
        let piece = interval_coefficients(mu_rate * delta, lam * delta, &entry)?;
        entry.copy_from_slice(piece.exit());
        pieces.push(piece);
    }
    Ok(pieces)
}

/// Expected top-`k` visibility and its per-piece breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityValue {
    /// Rank threshold the value refers to.
    pub k: usize,
    /// Total expected visible time in hours (attention-weighted when a
    /// weight profile was supplied).
    pub value: f64,
    /// Contribution of each grid piece, in the same units.
    pub per_piece: Vec<f64>,
}

/// Expected time (hours) the broadcaster spends in the follower's top `k`
/// over the horizon: the integral of `f_k`.
pub fn visibility(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    k: usize,
) -> Result<VisibilityValue> {
    weighted_visibility_inner(lambda, mu, None, k)
}

/// Attention-weighted visibility: the integral of `f_k(t) * s(t)`, where
/// `s` is the follower's piecewise-constant attention profile.
///
/// `s` must share the rate grid. Since `s` is constant on each piece this
/// weighting is exact, not a quadrature.
pub fn weighted_visibility(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    s: &PiecewiseConstantFn,
    k: usize,
) -> Result<VisibilityValue> {
    check_same_grid(lambda.grid(), s.grid())?;
    weighted_visibility_inner(lambda, mu, Some(s), k)
}

fn weighted_visibility_inner(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    s: Option<&PiecewiseConstantFn>,
    k: usize,
) -> Result<VisibilityValue> {
    let pieces = fk_trajectory(lambda, mu, k)?;
    let delta = lambda.grid().delta();
    let mut chain = MassChain::new(k);
    let c: Vec<f64> = masses(lambda);
    let b: Vec<f64> = masses(mu);
    let weights = s.map(|f| f.values());
    let mut per_piece = Vec::with_capacity(pieces.len());
    let mut total = CompensatedSum::new();
    for (m, _) in pieces.iter().enumerate() {
        let v = chain.piece_integral(c[m], b[m]);
        let w = weights.map_or(1.0, |vals| vals[m]);
        let contribution = delta * w * v;
        per_piece.push(contribution);
        total.add(contribution);
    }
    Ok(VisibilityValue {
        k,
        value: total.value(),
        per_piece,
    })
}

/// Streaming evaluator for the chained per-piece integrals, in normalized
/// mass coordinates. One instance amortizes its scratch buffers across many
/// pieces and many followers, which keeps the optimizer's inner loop free
/// of allocation.
pub(crate) struct MassChain {
    k: usize,
    /// Current boundary values `h_1 ..= h_k`.
    h: Vec<f64>,
    next_h: Vec<f64>,
    beta: Vec<f64>,
    moments: Vec<f64>,
}

impl MassChain {
    pub(crate) fn new(k: usize) -> Self {
        assert!(k >= 1);
        MassChain {
            k,
            h: vec![0.0; k],
            next_h: vec![0.0; k],
            beta: vec![0.0; k],
            moments: Vec::with_capacity(k + 2),
        }
    }

    /// Resets the boundary values to an empty feed.
    pub(crate) fn reset(&mut self) {
        self.h.fill(0.0);
    }

    /// Advances the chain across one piece with posting mass `c` and feed
    /// mass `b`, returning the normalized integral of `f_k` over the piece.
    pub(crate) fn piece_integral(&mut self, c: f64, b: f64) -> f64 {
        let k = self.k;
        let a = b + c;
        if a == 0.0 {
            return self.h[k - 1];
        }
        steady_states_into(b, c, &mut self.beta);
        exp_moments_into(a, k - 1, &mut self.moments);
        let decay = (-a).exp();

        // Integral of the top level: beta_k + sum_i alpha_{i,k} E_i.
        let mut integral = CompensatedSum::new();
        integral.add(self.beta[k - 1]);
        let mut weight = 1.0;
        for i in 0..k {
            integral.add(weight * (self.h[k - 1 - i] - self.beta[k - 1 - i]) * self.moments[i]);
            weight *= b / (i + 1) as f64;
        }

        // Exit values for every level become the next boundary.
        for j in 1..=k {
            let mut weight = 1.0;
            let mut acc = CompensatedSum::new();
            for i in 0..j {
                acc.add(weight * (self.h[j - 1 - i] - self.beta[j - 1 - i]));
                weight *= b / (i + 1) as f64;
            }
            let mut y = (decay * acc.value() + self.beta[j - 1]).clamp(0.0, 1.0);
            if j > 1 {
                y = y.max(self.next_h[j - 2]);
            }
            self.next_h[j - 1] = y;
        }
        std::mem::swap(&mut self.h, &mut self.next_h);
        integral.value().clamp(0.0, 1.0)
    }

    /// Weighted sum of piece integrals over a full horizon in mass
    /// coordinates: `sum_m s_m * integral_m`. Resets the chain first.
    pub(crate) fn weighted_value(&mut self, c: &[f64], b: &[f64], s: Option<&[f64]>) -> f64 {
        debug_assert_eq!(c.len(), b.len());
        self.reset();
        let mut total = CompensatedSum::new();
        for m in 0..c.len() {
            let v = self.piece_integral(c[m], b[m]);
            total.add(s.map_or(v, |w| w[m] * v));
        }
        total.value()
    }
}

/// Recomputes `f_k(t)` by quadrature of the renewal form
///
/// ```text
/// f_k(t) = integral over tau in [0, t] of
///          lambda(tau) * exp(-Lambda(tau, t)) * Q(k, Mu(tau, t))
/// ```
///
/// where `Lambda` and `Mu` are the rate integrals over `(tau, t)` and
/// `Q(k, x)` is the probability that fewer than `k` Poisson(x) competing
/// stories arrived since the broadcaster's last post at `tau`.
///
/// Composite Simpson quadrature is applied separately between grid
/// boundaries (the integrand is smooth there), with at least `steps` nodes
/// overall. Intentionally slow and structurally independent of the closed
/// form — this is the oracle the closed form is tested against.
pub fn fk_quadrature_oracle(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    k: usize,
    t: f64,
    steps: usize,
) -> Result<f64> {
    check_same_grid(lambda.grid(), mu.grid())?;
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    if steps < 1000 {
        return Err(Error::invalid(format!(
            "oracle quadrature needs at least 1000 steps, got {steps}"
        )));
    }
    let grid = lambda.grid();
    if !(0.0..=grid.horizon()).contains(&t) {
        return Err(Error::OutOfDomain {
            t,
            horizon: grid.horizon(),
        });
    }
    if t == 0.0 {
        return Ok(0.0);
    }

    let delta = grid.delta();
    let mut total = CompensatedSum::new();
    for m in 0..grid.pieces() {
        let lo = grid.piece_start(m);
        if lo >= t {
            break;
        }
        let hi = (lo + delta).min(t);
        let lam = lambda.values()[m];
        if lam == 0.0 || hi <= lo {
            continue;
        }
        // Even subinterval count proportional to the segment share.
        let share = ((hi - lo) / t * steps as f64).ceil() as usize;
        let n = share.max(2).next_multiple_of(2);
        let h = (hi - lo) / n as f64;
        let mut seg = CompensatedSum::new();
        for node in 0..=n {
            let tau = if node == n { hi } else { lo + h * node as f64 };
            let weight = if node == 0 || node == n {
                1.0
            } else if node % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let survival = (-lambda.integrate(tau, t)?).exp();
            let room = regularized_gamma_q(k, mu.integrate(tau, t)?);
            seg.add(weight * survival * room);
        }
        total.add(lam * seg.value() * h / 3.0);
    }
    Ok(total.value().clamp(0.0, 1.0))
}
