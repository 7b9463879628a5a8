//! Fitting posting behavior from event logs and assembling optimization
//! problems, plus a synthetic corpus generator for end-to-end tests.
//!
//! The model is periodic: a grid of horizon `T` hours repeats wall-clock
//! time. Fitting folds every timestamp modulo `T` into the grid's `M` bins:
//!
//! * intensity: `rate_m = count_m / (delta * periods)` — the
//!   maximum-likelihood rate of a periodic piecewise-constant Poisson
//!   process;
//! * attention: `s_m = (periods with >= 1 event in bin m) / periods` — the
//!   empirical probability the user is active in that bin.
//!
//! Only whole periods count: a trailing partial period is excluded from
//! both numerator and denominator, so estimates are unbiased.
//!
//! Feed rates compose by addition ([`crate::network::feed_rate_excluding`]):
//! fitting each user separately and summing equals fitting the merged
//! timeline, because Poisson processes superpose.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::grid::{PiecewiseConstantFn, TimeGrid};
use crate::network::{EventSequence, Network, UserId};
use crate::optimize::{BroadcastProblem, Follower, Objective};
use crate::seeds::{derive_rng, stream};

/// Seconds per hour, the unit conversion between wall-clock timestamps and
/// grid time.
const SECONDS_PER_HOUR: f64 = 3600.0;

/// One microsecond in hours: the jitter applied to duplicate timestamps
/// when strict ordering is required.
const JITTER_HOURS: f64 = 1.0 / (SECONDS_PER_HOUR * 1_000_000.0);

/// A raw event log: who posted when, plus the observation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    records: Vec<(UserId, i64)>,
    window: (i64, i64),
}

impl EventLog {
    /// Wraps records (input order is preserved) with an observation window
    /// `[start, end)` in seconds. With `window = None` the window is
    /// derived as `[min timestamp, max timestamp + 1)`, which requires at
    /// least one record.
    pub fn new(records: Vec<(UserId, i64)>, window: Option<(i64, i64)>) -> Result<Self> {
        let window = match window {
            Some((start, end)) => {
                if start >= end {
                    return Err(Error::invalid(format!(
                        "log window [{start}, {end}) is empty"
                    )));
                }
                (start, end)
            }
            None => {
                let min = records.iter().map(|(_, t)| *t).min();
                let max = records.iter().map(|(_, t)| *t).max();
                match (min, max) {
                    (Some(min), Some(max)) => (min, max + 1),
                    _ => {
                        return Err(Error::invalid(
                            "cannot derive a window from an empty event log",
                        ))
                    }
                }
            }
        };
        for (user, t) in &records {
            if *t < window.0 || *t >= window.1 {
                return Err(Error::invalid(format!(
                    "event for {user} at {t} outside window [{}, {})",
                    window.0, window.1
                )));
            }
        }
        Ok(EventLog { records, window })
    }

    /// Wraps records with the window snapped *outward* to whole multiples
    /// of the period: `[floor(min/P)*P, ceil((max+1)/P)*P)` with period
    /// `P = horizon_hours` in seconds. This keeps folding aligned to
    /// absolute time (an event at 09:00 UTC lands in the 9-o'clock bin no
    /// matter when the log starts), at the cost of treating the partially
    /// observed first and last periods as fully observed — a bias that
    /// vanishes as the log grows. The period must be a whole number of
    /// seconds. An empty record list yields the window `[0, P)`.
    pub fn aligned(records: Vec<(UserId, i64)>, horizon_hours: f64) -> Result<Self> {
        if !horizon_hours.is_finite() || horizon_hours <= 0.0 {
            return Err(Error::invalid(format!(
                "period must be positive and finite, got {horizon_hours} hours"
            )));
        }
        let seconds = horizon_hours * SECONDS_PER_HOUR;
        if (seconds - seconds.round()).abs() > 1e-6 || seconds < 1.0 {
            return Err(Error::invalid(
                "window alignment requires a period that is a whole number of seconds",
            ));
        }
        let period = seconds.round() as i64;
        let window = match (
            records.iter().map(|(_, t)| *t).min(),
            records.iter().map(|(_, t)| *t).max(),
        ) {
            (Some(min), Some(max)) => {
                (min.div_euclid(period) * period, (max + 1).div_euclid(period) * period
                    + if (max + 1).rem_euclid(period) == 0 { 0 } else { period })
            }
            _ => (0, period),
        };
        EventLog::new(records, Some(window))
    }

    /// All records in input order.
    pub fn records(&self) -> &[(UserId, i64)] {
        &self.records
    }

    /// Observation window `[start, end)` in seconds.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// True when the log holds no records.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Timestamps of one user, in input order.
    pub fn user_timestamps(&self, user: &UserId) -> Vec<i64> {
        self.records
            .iter()
            .filter(|(u, _)| u == user)
            .map(|(_, t)| *t)
            .collect()
    }

    /// Distinct users appearing in the log, sorted.
    pub fn users(&self) -> BTreeSet<UserId> {
        self.records.iter().map(|(u, _)| u.clone()).collect()
    }

    /// Number of whole periods of `horizon_hours` the window covers.
    pub fn whole_periods(&self, horizon_hours: f64) -> u64 {
        let span = (self.window.1 - self.window.0) as f64;
        (span / (horizon_hours * SECONDS_PER_HOUR)).floor() as u64
    }
}

/// A user's fitted periodic behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedProfile {
    /// Who was fitted.
    pub id: UserId,
    /// Posting intensity, posts per hour per bin.
    pub intensity: PiecewiseConstantFn,
    /// Attention profile: probability of activity per bin, in `[0, 1]`.
    pub attention: PiecewiseConstantFn,
    /// Whole periods the fit observed.
    pub training_periods: u64,
    /// Mean posts per period (within whole periods).
    pub events_per_period: f64,
}

impl FittedProfile {
    /// True when the user had no events in the training window — the
    /// "inactive user" warning flag; such users keep zero functions.
    pub fn is_inactive(&self) -> bool {
        self.events_per_period == 0.0
    }
}

/// Shared folding pass: per-bin event counts, per-bin period-presence
/// counts, and the number of whole periods.
fn fold_user(log: &EventLog, user: &UserId, grid: TimeGrid) -> Result<(Vec<u64>, Vec<u64>, u64)> {
    let periods = log.whole_periods(grid.horizon());
    if periods == 0 {
        return Err(Error::invalid(format!(
            "observation window shorter than one period of {} hours",
            grid.horizon()
        )));
    }
    let seconds_per_period = grid.horizon() * SECONDS_PER_HOUR;
    let bins = grid.pieces();
    let mut counts = vec![0u64; bins];
    let mut seen = vec![false; (periods as usize) * bins];
    for &ts in &log.user_timestamps(user) {
        let rel = (ts - log.window().0) as f64;
        let period = (rel / seconds_per_period).floor() as u64;
        if period >= periods {
            // Trailing partial period: excluded from the estimate.
            continue;
        }
        let hour = (rel - period as f64 * seconds_per_period) / SECONDS_PER_HOUR;
        let bin = ((hour / grid.delta()) as usize).min(bins - 1);
        counts[bin] += 1;
        seen[period as usize * bins + bin] = true;
    }
    let mut presence = vec![0u64; bins];
    for period in 0..periods as usize {
        for (bin, slot) in presence.iter_mut().enumerate() {
            if seen[period * bins + bin] {
                *slot += 1;
            }
        }
    }
    Ok((counts, presence, periods))
}

/// Maximum-likelihood periodic posting intensity of `user`:
/// `rate_m = count_m / (delta * periods)`.
///
/// A user absent from the log gets the zero function (inactive users are
/// data, not errors); the window must still cover at least one whole
/// period.
pub fn fit_intensity(log: &EventLog, user: &UserId, grid: TimeGrid) -> Result<PiecewiseConstantFn> {
    let (counts, _, periods) = fold_user(log, user, grid)?;
    PiecewiseConstantFn::new(grid, counts.iter().map(|&c| event_rate(c, periods, grid)).collect())
}

/// `count / (periods * delta)`, dividing by the period count first so that
/// fitting on q concatenated copies of a period reproduces the one-period
/// rates bit-for-bit (`(q*n)/q` is exact; `delta * q` need not be).
fn event_rate(count: u64, periods: u64, grid: TimeGrid) -> f64 {
    (count as f64 / periods as f64) / grid.delta()
}

/// Empirical attention profile of `user`: the fraction of observed periods
/// with at least one event in each bin.
pub fn estimate_significance(
    log: &EventLog,
    user: &UserId,
    grid: TimeGrid,
) -> Result<PiecewiseConstantFn> {
    let (_, presence, periods) = fold_user(log, user, grid)?;
    PiecewiseConstantFn::new(
        grid,
        presence
            .iter()
            .map(|&p| p as f64 / periods as f64)
            .collect(),
    )
}

/// Fits intensity and attention together, with bookkeeping.
pub fn fit_profile(log: &EventLog, user: &UserId, grid: TimeGrid) -> Result<FittedProfile> {
    let (counts, presence, periods) = fold_user(log, user, grid)?;
    let intensity =
        PiecewiseConstantFn::new(grid, counts.iter().map(|&c| event_rate(c, periods, grid)).collect())?;
    let attention = PiecewiseConstantFn::new(
        grid,
        presence
            .iter()
            .map(|&p| p as f64 / periods as f64)
            .collect(),
    )?;
    let total: u64 = counts.iter().sum();
    Ok(FittedProfile {
        id: user.clone(),
        intensity,
        attention,
        training_periods: periods,
        events_per_period: total as f64 / periods as f64,
    })
}

/// Assembles the optimization problem for `broadcaster` from a follow graph
/// and an event log: every follower gets a fitted competing-feed rate
/// (sum of all *other* followees' fitted intensities) and a fitted
/// attention profile.
///
/// `budget` defaults to the broadcaster's fitted mean posts per period; an
/// explicit value overrides it. A broadcaster with followers but no
/// recorded posts has no usable default and requires an explicit budget.
pub fn build_problem(
    network: &Network,
    log: &EventLog,
    broadcaster: &UserId,
    grid: TimeGrid,
    k: usize,
    budget: Option<f64>,
    objective: Objective,
) -> Result<BroadcastProblem> {
    let followers: Vec<UserId> = network.followers(broadcaster).cloned().collect();
    if followers.is_empty() {
        return Err(Error::UnknownUser(format!(
            "{broadcaster} has no followers in the network"
        )));
    }
    // Fit every relevant user exactly once.
    let mut needed: BTreeSet<UserId> = BTreeSet::new();
    needed.insert(broadcaster.clone());
    for v in &followers {
        needed.extend(network.followees(v).cloned());
    }
    let mut intensities: BTreeMap<UserId, PiecewiseConstantFn> = BTreeMap::new();
    for user in needed {
        let fitted = fit_intensity(log, &user, grid)?;
        intensities.insert(user, fitted);
    }

    let mut assembled = Vec::with_capacity(followers.len());
    for v in &followers {
        let mu = crate::network::feed_rate_excluding(network, &intensities, broadcaster, v)?;
        let s = estimate_significance(log, v, grid)?;
        assembled.push(Follower::new(v.clone(), mu, s)?);
    }

    let budget = match budget {
        Some(c) => c,
        None => {
            let profile = fit_profile(log, broadcaster, grid)?;
            if profile.is_inactive() {
                return Err(Error::invalid(format!(
                    "{broadcaster} has no recorded posts; specify a budget explicitly"
                )));
            }
            profile.events_per_period
        }
    };
    BroadcastProblem::new(grid, assembled, k, budget, objective)
}

/// Folds one user's timestamps to grid hours in `[0, horizon)` for a given
/// period index, preserving input order for ties and then enforcing strict
/// ordering with +1 microsecond jitter per duplicate.
fn fold_period_hours(timestamps: &[i64], window_start: i64, period: u64, horizon: f64) -> Vec<f64> {
    let seconds_per_period = horizon * SECONDS_PER_HOUR;
    let mut hours: Vec<f64> = timestamps
        .iter()
        .filter_map(|&ts| {
            let rel = (ts - window_start) as f64;
            let p = (rel / seconds_per_period).floor();
            if p == period as f64 {
                Some((rel - p * seconds_per_period) / SECONDS_PER_HOUR)
            } else {
                None
            }
        })
        .collect();
    hours.sort_by(|a, b| a.partial_cmp(b).expect("finite hours"));
    for idx in 1..hours.len() {
        if hours[idx] <= hours[idx - 1] {
            hours[idx] = hours[idx - 1] + JITTER_HOURS;
        }
    }
    hours.retain(|&h| h < horizon);
    hours
}

/// Slices a recorded log into per-period feed sequences for `follower`
/// watching `broadcaster`: for every whole period in the log window, the
/// events of all the follower's *other* followees, folded to `[0, horizon)`
/// hours.
///
/// This is the recorded competition used by held-out evaluation; the
/// broadcaster's own recorded posts are excluded because the candidate
/// schedule replaces them.
pub fn fold_feed_periods(
    network: &Network,
    log: &EventLog,
    broadcaster: &UserId,
    follower: &UserId,
    grid: TimeGrid,
) -> Result<Vec<EventSequence>> {
    if !network.follows(follower, broadcaster) {
        return Err(Error::invalid(format!(
            "{follower} does not follow {broadcaster}"
        )));
    }
    let periods = log.whole_periods(grid.horizon());
    if periods == 0 {
        return Err(Error::invalid(format!(
            "observation window shorter than one period of {} hours",
            grid.horizon()
        )));
    }
    let mut feed_timestamps: Vec<i64> = Vec::new();
    for followee in network.followees(follower) {
        if followee == broadcaster {
            continue;
        }
        feed_timestamps.extend(log.user_timestamps(followee));
    }
    feed_timestamps.sort();
    let mut sequences = Vec::with_capacity(periods as usize);
    for period in 0..periods {
        let hours = fold_period_hours(&feed_timestamps, log.window().0, period, grid.horizon());
        sequences.push(EventSequence::new(follower.clone(), hours)?);
    }
    Ok(sequences)
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Parameters of a synthetic corpus.
///
/// The generated world has `broadcasters` broadcasters, each followed by
/// `followers_per_broadcaster` dedicated followers; every follower also
/// follows `followees_per_follower` users drawn from a shared background
/// pool of `background_users`, which is what creates competing feed
/// traffic. Every user posts from a smooth single-peak daily shape with a
/// random phase, scaled to a base rate drawn from the matching range.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec {
    /// Grid defining the period length and bin count.
    pub grid: TimeGrid,
    /// Number of broadcasters.
    pub broadcasters: usize,
    /// Followers per broadcaster.
    pub followers_per_broadcaster: usize,
    /// Size of the shared background-user pool.
    pub background_users: usize,
    /// Background users each follower follows.
    pub followees_per_follower: usize,
    /// Base-rate range (posts/hour) for broadcasters.
    pub broadcaster_rate: (f64, f64),
    /// Base-rate range for background users.
    pub background_rate: (f64, f64),
    /// Base-rate range for the followers' own activity (drives their
    /// attention profiles).
    pub follower_rate: (f64, f64),
    /// Whole periods in the training log.
    pub train_periods: u32,
    /// Whole periods in the test log.
    pub test_periods: u32,
}

impl SynthesisSpec {
    fn validate(&self) -> Result<()> {
        if self.broadcasters == 0 || self.followers_per_broadcaster == 0 {
            return Err(Error::invalid(
                "corpus needs at least one broadcaster and one follower",
            ));
        }
        if self.followees_per_follower > self.background_users {
            return Err(Error::invalid(format!(
                "cannot follow {} users from a pool of {}",
                self.followees_per_follower, self.background_users
            )));
        }
        for (name, (lo, hi)) in [
            ("broadcaster_rate", self.broadcaster_rate),
            ("background_rate", self.background_rate),
            ("follower_rate", self.follower_rate),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
                return Err(Error::invalid(format!("invalid {name} range [{lo}, {hi}]")));
            }
        }
        if self.train_periods == 0 || self.test_periods == 0 {
            return Err(Error::invalid("train and test need at least one period each"));
        }
        let seconds = self.grid.horizon() * SECONDS_PER_HOUR;
        if (seconds - seconds.round()).abs() > 1e-6 || seconds < 1.0 {
            return Err(Error::invalid(
                "corpus generation requires a period that is a whole number of seconds",
            ));
        }
        Ok(())
    }
}

/// A generated world: the graph, train/test logs over disjoint windows,
/// and the ground-truth intensities behind them.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Follow graph.
    pub network: Network,
    /// The designated broadcasters (the background pool also accrues
    /// followers, so this cannot be derived from the graph).
    pub broadcasters: Vec<UserId>,
    /// Training log, window `[0, train_periods * T)`.
    pub train: EventLog,
    /// Test log, the following `test_periods` periods.
    pub test: EventLog,
    /// Ground-truth intensity of every user.
    pub truth: BTreeMap<UserId, PiecewiseConstantFn>,
}

/// Circular single-peak daily shape: a Gaussian bump of width `sigma` bins
/// centered at `phase`, lifted by a floor so off-peak hours stay active.
fn bump_shape(bins: usize, phase: f64, sigma: f64, bin: usize) -> f64 {
    let center = bin as f64 + 0.5;
    let direct = (center - phase).abs();
    let distance = direct.min(bins as f64 - direct);
    0.25 + 1.5 * (-distance * distance / (2.0 * sigma * sigma)).exp()
}

/// Draws a ground-truth intensity for user index `user_index`.
fn truth_intensity(
    spec: &SynthesisSpec,
    seed: u64,
    user_index: u64,
    range: (f64, f64),
) -> PiecewiseConstantFn {
    use rand::Rng;
    let mut rng = derive_rng(seed, &[stream::SYNTH_SHAPE, user_index]);
    let bins = spec.grid.pieces();
    let base = if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    };
    let phase = rng.random_range(0.0..bins as f64);
    let sigma = (bins as f64 / 8.0).max(0.75);
    let values = (0..bins)
        .map(|m| base * bump_shape(bins, phase, sigma, m))
        .collect();
    PiecewiseConstantFn::new(spec.grid, values).expect("nonnegative synthetic rates")
}

/// Generates a reproducible synthetic corpus: ground-truth intensities,
/// a follow graph, and train/test logs sampled period by period.
pub fn synthesize_corpus(spec: &SynthesisSpec, seed: u64) -> Result<SyntheticCorpus> {
    use rand::seq::SliceRandom;
    spec.validate()?;
    let period_seconds = (spec.grid.horizon() * SECONDS_PER_HOUR).round() as i64;

    // Stable ids: width chosen from the counts so sorting is numeric.
    let broadcaster_ids: Vec<UserId> = (0..spec.broadcasters)
        .map(|i| UserId::new(format!("b{i:04}")).expect("valid id"))
        .collect();
    let background_ids: Vec<UserId> = (0..spec.background_users)
        .map(|i| UserId::new(format!("g{i:04}")).expect("valid id"))
        .collect();
    let follower_ids: Vec<UserId> = (0..spec.broadcasters)
        .flat_map(|b| {
            (0..spec.followers_per_broadcaster)
                .map(move |j| UserId::new(format!("f{b:04}_{j:03}")).expect("valid id"))
        })
        .collect();

    // Ground truth: one shape per user; indices are stable across the
    // three groups (broadcasters, background, followers).
    let mut truth: BTreeMap<UserId, PiecewiseConstantFn> = BTreeMap::new();
    let mut user_index = 0u64;
    for id in &broadcaster_ids {
        truth.insert(
            id.clone(),
            truth_intensity(spec, seed, user_index, spec.broadcaster_rate),
        );
        user_index += 1;
    }
    for id in &background_ids {
        truth.insert(
            id.clone(),
            truth_intensity(spec, seed, user_index, spec.background_rate),
        );
        user_index += 1;
    }
    for id in &follower_ids {
        truth.insert(
            id.clone(),
            truth_intensity(spec, seed, user_index, spec.follower_rate),
        );
        user_index += 1;
    }

    // Wiring: each follower follows its broadcaster plus a random draw
    // from the background pool.
    let mut network = Network::default();
    for (f_idx, follower) in follower_ids.iter().enumerate() {
        let broadcaster = &broadcaster_ids[f_idx / spec.followers_per_broadcaster];
        network.add_edge(broadcaster.clone(), follower.clone())?;
        let mut rng = derive_rng(seed, &[stream::SYNTH_GRAPH, f_idx as u64]);
        let mut pool: Vec<usize> = (0..spec.background_users).collect();
        pool.shuffle(&mut rng);
        for &g in pool.iter().take(spec.followees_per_follower) {
            network.add_edge(background_ids[g].clone(), follower.clone())?;
        }
    }

    // Events: every user posts in every period; the first train_periods
    // periods form the training log, the rest the test log.
    let total_periods = spec.train_periods as u64 + spec.test_periods as u64;
    let split = spec.train_periods as i64 * period_seconds;
    let end = total_periods as i64 * period_seconds;
    let mut train_records: Vec<(UserId, i64)> = Vec::new();
    let mut test_records: Vec<(UserId, i64)> = Vec::new();
    let ordered_ids: Vec<&UserId> = broadcaster_ids
        .iter()
        .chain(background_ids.iter())
        .chain(follower_ids.iter())
        .collect();
    for (idx, id) in ordered_ids.iter().enumerate() {
        let intensity = &truth[*id];
        for period in 0..total_periods {
            let mut rng = derive_rng(seed, &[stream::SYNTH_EVENTS, idx as u64, period]);
            let times = crate::simulate::sample_times(intensity, &mut rng);
            for t in times {
                let ts = period as i64 * period_seconds + (t * SECONDS_PER_HOUR).floor() as i64;
                let record = ((*id).clone(), ts.min(end - 1));
                if ts < split {
                    train_records.push(record);
                } else {
                    test_records.push(record);
                }
            }
        }
    }
    train_records.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    test_records.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));

    Ok(SyntheticCorpus {
        network,
        broadcasters: broadcaster_ids,
        train: EventLog::new(train_records, Some((0, split)))?,
        test: EventLog::new(test_records, Some((split, end)))?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn grid(horizon: f64, pieces: usize) -> TimeGrid {
        TimeGrid::new(horizon, pieces).unwrap()
    }

    fn hour(h: f64) -> i64 {
        (h * 3600.0) as i64
    }

    #[test]
    fn event_log_window_rules() {
        assert!(EventLog::new(vec![], None).is_err());
        assert!(EventLog::new(vec![], Some((0, 100))).is_ok());
        assert!(EventLog::new(vec![(uid("a"), 5)], Some((0, 5))).is_err());
        assert!(EventLog::new(vec![(uid("a"), 5)], Some((10, 5))).is_err());
        let derived = EventLog::new(vec![(uid("a"), 5), (uid("b"), 9)], None).unwrap();
        assert_eq!(derived.window(), (5, 10));
        assert_eq!(derived.whole_periods(1.0 / 3600.0), 5);
    }

    #[test]
    fn aligned_window_snaps_to_period_boundaries() {
        // Events at 26h and 30h with a daily period: the window must cover
        // exactly day 2 ([86400, 172800)), one whole period, and the events
        // land in the absolute-time bins 2 and 6.
        let records = vec![(uid("u"), hour(26.0)), (uid("u"), hour(30.0))];
        let log = EventLog::aligned(records, 24.0).unwrap();
        assert_eq!(log.window(), (86_400, 2 * 86_400));
        assert_eq!(log.whole_periods(24.0), 1);
        let fitted = fit_intensity(&log, &uid("u"), grid(24.0, 24)).unwrap();
        assert_eq!(fitted.values()[2], 1.0);
        assert_eq!(fitted.values()[6], 1.0);
        assert_eq!(fitted.total_mass(), 2.0);

        // A max timestamp exactly at a boundary minus one second does not
        // spill into an extra period; one at the boundary does.
        let log = EventLog::aligned(vec![(uid("u"), 86_399)], 24.0).unwrap();
        assert_eq!(log.window(), (0, 86_400));
        let log = EventLog::aligned(vec![(uid("u"), 86_400)], 24.0).unwrap();
        assert_eq!(log.window(), (86_400, 2 * 86_400));

        // Empty logs get a single empty period; fractional-second periods
        // are rejected.
        let log = EventLog::aligned(vec![], 24.0).unwrap();
        assert_eq!(log.window(), (0, 86_400));
        assert!(EventLog::aligned(vec![], 1.0 / 7000.0).is_err());

        // Negative timestamps align with floor division.
        let log = EventLog::aligned(vec![(uid("u"), -10)], 24.0).unwrap();
        assert_eq!(log.window(), (-86_400, 0));
    }

    #[test]
    fn intensity_concentrates_in_the_right_bin() {
        // 48 events over 2 daily periods, all between 09:00 and 10:00:
        // bin 9 fits 48 / (1h * 2) = 24 posts/hour, everything else 0.
        let mut records = Vec::new();
        for day in 0..2 {
            for i in 0..24 {
                records.push((uid("u"), day * 86_400 + hour(9.0) + i * 100));
            }
        }
        let log = EventLog::new(records, Some((0, 2 * 86_400))).unwrap();
        let fitted = fit_intensity(&log, &uid("u"), grid(24.0, 24)).unwrap();
        for (bin, &rate) in fitted.values().iter().enumerate() {
            let expected = if bin == 9 { 24.0 } else { 0.0 };
            assert_eq!(rate, expected, "bin {bin}");
        }
    }

    #[test]
    fn significance_is_period_presence_frequency() {
        // Active at hour 9 in 3 of 10 days: s_9 = 0.3 regardless of how
        // many events land in those hours.
        let mut records = Vec::new();
        for day in [1i64, 4, 7] {
            records.push((uid("u"), day * 86_400 + hour(9.25)));
            records.push((uid("u"), day * 86_400 + hour(9.5)));
        }
        let log = EventLog::new(records, Some((0, 10 * 86_400))).unwrap();
        let s = estimate_significance(&log, &uid("u"), grid(24.0, 24)).unwrap();
        for (bin, &v) in s.values().iter().enumerate() {
            let expected = if bin == 9 { 0.3 } else { 0.0 };
            assert!((v - expected).abs() < 1e-15, "bin {bin}");
        }
    }

    #[test]
    fn absent_user_fits_zero_functions() {
        let log = EventLog::new(vec![(uid("other"), 100)], Some((0, 86_400))).unwrap();
        let g = grid(24.0, 4);
        assert_eq!(fit_intensity(&log, &uid("u"), g).unwrap().total_mass(), 0.0);
        assert_eq!(
            estimate_significance(&log, &uid("u"), g).unwrap().total_mass(),
            0.0
        );
        let profile = fit_profile(&log, &uid("u"), g).unwrap();
        assert!(profile.is_inactive());
        assert_eq!(profile.training_periods, 1);
    }

    #[test]
    fn window_shorter_than_a_period_is_an_error() {
        let log = EventLog::new(vec![(uid("u"), 100)], Some((0, 3600))).unwrap();
        assert!(fit_intensity(&log, &uid("u"), grid(24.0, 24)).is_err());
    }

    #[test]
    fn tail_partial_period_is_excluded() {
        // Window of 1.5 periods: the event in the half tail must not count,
        // and the denominator stays one period.
        let g = grid(2.0, 2);
        let log = EventLog::new(
            vec![(uid("u"), hour(0.5)), (uid("u"), hour(2.5))],
            Some((0, hour(3.0))),
        )
        .unwrap();
        let fitted = fit_intensity(&log, &uid("u"), g).unwrap();
        assert_eq!(fitted.values(), &[1.0, 0.0]);
    }

    #[test]
    fn folding_is_consistent_across_replication() {
        // The same within-period pattern repeated q times fits identical
        // rates and attention as a single period.
        let g = grid(2.0, 4);
        let pattern = [0.25, 0.3, 1.7];
        let single: Vec<(UserId, i64)> =
            pattern.iter().map(|&h| (uid("u"), hour(h))).collect();
        let log1 = EventLog::new(single, Some((0, hour(2.0)))).unwrap();
        let mut repeated = Vec::new();
        for q in 0..5i64 {
            for &h in &pattern {
                repeated.push((uid("u"), q * hour(2.0) + hour(h)));
            }
        }
        let log5 = EventLog::new(repeated, Some((0, 5 * hour(2.0)))).unwrap();
        assert_eq!(
            fit_intensity(&log1, &uid("u"), g).unwrap().values(),
            fit_intensity(&log5, &uid("u"), g).unwrap().values()
        );
        assert_eq!(
            estimate_significance(&log1, &uid("u"), g).unwrap().values(),
            estimate_significance(&log5, &uid("u"), g).unwrap().values()
        );
    }

    #[test]
    fn build_problem_assembles_feeds_and_budget() {
        // u broadcasts to v; v also follows w. The feed rate for v is w's
        // fitted intensity alone; the default budget is u's posts/period:
        // 42 posts over 7 days -> 6.
        let mut network = Network::default();
        network.add_edge(uid("u"), uid("v")).unwrap();
        network.add_edge(uid("w"), uid("v")).unwrap();
        let mut records = Vec::new();
        for day in 0..7i64 {
            for post in 0..6i64 {
                records.push((uid("u"), day * 86_400 + post * 3600));
            }
            records.push((uid("w"), day * 86_400 + hour(12.5)));
            records.push((uid("v"), day * 86_400 + hour(20.5)));
        }
        let log = EventLog::new(records, Some((0, 7 * 86_400))).unwrap();
        let g = grid(24.0, 24);
        let problem = build_problem(
            &network,
            &log,
            &uid("u"),
            g,
            1,
            None,
            Objective::AverageVisibility,
        )
        .unwrap();
        assert_eq!(problem.budget(), 6.0);
        assert_eq!(problem.followers().len(), 1);
        let follower = &problem.followers()[0];
        // w posts once per day at 12:30 -> fitted 1/hour in bin 12.
        for (bin, &rate) in follower.mu().values().iter().enumerate() {
            let expected = if bin == 12 { 1.0 } else { 0.0 };
            assert_eq!(rate, expected, "bin {bin}");
        }
        // v is active daily at 20:30 -> attention 1 in bin 20.
        assert_eq!(follower.s().values()[20], 1.0);
        // The broadcaster's own intensity must not leak into the feed.
        assert_eq!(follower.mu().values()[0], 0.0);
    }

    #[test]
    fn build_problem_with_only_the_broadcaster_has_zero_feed() {
        let mut network = Network::default();
        network.add_edge(uid("u"), uid("v")).unwrap();
        let log = EventLog::new(vec![(uid("u"), 100)], Some((0, 86_400))).unwrap();
        let problem = build_problem(
            &network,
            &log,
            &uid("u"),
            grid(24.0, 4),
            1,
            Some(2.0),
            Objective::AverageVisibility,
        )
        .unwrap();
        assert_eq!(problem.followers()[0].mu().total_mass(), 0.0);
    }

    #[test]
    fn build_problem_errors() {
        let network = Network::from_edges([(uid("u"), uid("v"))]).unwrap();
        let log = EventLog::new(vec![(uid("v"), 100)], Some((0, 86_400))).unwrap();
        let g = grid(24.0, 4);
        // Unknown broadcaster.
        assert!(build_problem(
            &network,
            &log,
            &uid("nobody"),
            g,
            1,
            Some(1.0),
            Objective::AverageVisibility
        )
        .is_err());
        // Inactive broadcaster without explicit budget.
        assert!(build_problem(
            &network,
            &log,
            &uid("u"),
            g,
            1,
            None,
            Objective::AverageVisibility
        )
        .is_err());
        // Same call with a budget succeeds.
        assert!(build_problem(
            &network,
            &log,
            &uid("u"),
            g,
            1,
            Some(1.0),
            Objective::AverageVisibility
        )
        .is_ok());
    }

    #[test]
    fn fold_feed_periods_slices_and_jitters() {
        let mut network = Network::default();
        network.add_edge(uid("u"), uid("v")).unwrap();
        network.add_edge(uid("w"), uid("v")).unwrap();
        network.add_edge(uid("x"), uid("v")).unwrap();
        // w and x post at the same second in period 0; u's own post must
        // be excluded; period 1 has one event.
        let records = vec![
            (uid("w"), hour(1.0)),
            (uid("x"), hour(1.0)),
            (uid("u"), hour(1.5)),
            (uid("x"), hour(2.0) + hour(0.5)),
        ];
        let log = EventLog::new(records, Some((0, hour(4.0)))).unwrap();
        let g = grid(2.0, 2);
        let periods = fold_feed_periods(&network, &log, &uid("u"), &uid("v"), g).unwrap();
        assert_eq!(periods.len(), 2);
        assert_eq!(periods[0].len(), 2);
        assert!(periods[0].times()[1] > periods[0].times()[0]);
        assert!((periods[0].times()[0] - 1.0).abs() < 1e-9);
        assert_eq!(periods[1].len(), 1);
        assert!((periods[1].times()[0] - 0.5).abs() < 1e-9);
        // Non-follower is rejected.
        assert!(fold_feed_periods(&network, &log, &uid("u"), &uid("w"), g).is_err());
    }

    fn small_spec() -> SynthesisSpec {
        SynthesisSpec {
            grid: grid(24.0, 12),
            broadcasters: 2,
            followers_per_broadcaster: 3,
            background_users: 5,
            followees_per_follower: 2,
            broadcaster_rate: (0.2, 0.4),
            background_rate: (0.5, 1.5),
            follower_rate: (0.1, 0.4),
            train_periods: 3,
            test_periods: 3,
        }
    }

    #[test]
    fn corpus_is_deterministic_and_well_formed() {
        let spec = small_spec();
        let a = synthesize_corpus(&spec, 42).unwrap();
        let b = synthesize_corpus(&spec, 42).unwrap();
        assert_eq!(a.train.records(), b.train.records());
        assert_eq!(a.test.records(), b.test.records());
        assert_eq!(a.network, b.network);
        let c = synthesize_corpus(&spec, 43).unwrap();
        assert_ne!(a.train.records(), c.train.records());

        // Train and test windows are disjoint and of the configured sizes.
        assert_eq!(a.train.window(), (0, 3 * 86_400));
        assert_eq!(a.test.window(), (3 * 86_400, 6 * 86_400));
        assert_eq!(a.broadcasters.len(), 2);
        // Every follower follows its broadcaster plus two background users.
        let followers: Vec<UserId> = a.network.followers(&a.broadcasters[0]).cloned().collect();
        assert_eq!(followers.len(), 3);
        for f in &followers {
            assert_eq!(a.network.followees(f).count(), 3);
        }
    }

    #[test]
    fn corpus_round_trips_through_fitting() {
        // With many periods, fitted rates approach ground truth within
        // Poisson counting error: |fit - truth| < 3 sqrt(truth/(delta*q))
        // per bin (using a floor for near-zero bins).
        let mut spec = small_spec();
        spec.train_periods = 120;
        spec.test_periods = 1;
        spec.broadcasters = 1;
        spec.followers_per_broadcaster = 1;
        spec.background_users = 2;
        spec.followees_per_follower = 1;
        let corpus = synthesize_corpus(&spec, 7).unwrap();
        let g = spec.grid;
        let q = 120.0;
        let mut checked = 0;
        for (user, truth) in &corpus.truth {
            let fitted = fit_intensity(&corpus.train, user, g).unwrap();
            for (bin, (&fit, &tru)) in fitted.values().iter().zip(truth.values()).enumerate() {
                let sigma = (tru / (g.delta() * q)).sqrt().max(0.02);
                assert!(
                    (fit - tru).abs() < 3.0 * sigma,
                    "{user} bin {bin}: fitted {fit} vs truth {tru}"
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn synthesis_spec_validation() {
        let mut spec = small_spec();
        spec.followees_per_follower = 99;
        assert!(synthesize_corpus(&spec, 1).is_err());
        let mut spec = small_spec();
        spec.train_periods = 0;
        assert!(synthesize_corpus(&spec, 1).is_err());
        let mut spec = small_spec();
        spec.background_rate = (2.0, 1.0);
        assert!(synthesize_corpus(&spec, 1).is_err());
        let mut spec = small_spec();
        spec.broadcasters = 0;
        assert!(synthesize_corpus(&spec, 1).is_err());
    }
}
