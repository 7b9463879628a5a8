//! Stochastic FIFO-feed simulator.
//!
//! The simulator is the model's ground truth: it samples actual posting
//! times, replays them through an explicit feed, and measures how long the
//! broadcaster's latest story stayed in the top `k`. The analytic engine in
//! [`crate::visibility`] must agree with it within Monte Carlo error, and
//! the test suite checks exactly that.
//!
//! Determinism: every entry point takes an integer seed and derives one
//! ChaCha8 sub-stream per (purpose, run) via [`crate::seeds`], and all
//! reductions run in fixed run order — so results never depend on thread
//! scheduling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PiecewiseConstantFn;
use crate::math::{mean_and_standard_error, CompensatedSum};
use crate::network::{EventSequence, UserId};
use crate::seeds::{derive_rng, stream};

/// Feed length kept by the platform: stories pushed past this many slots
/// are gone for good.
pub const DEFAULT_FEED_CAPACITY: usize = 20;

/// Where a story in the feed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorySource {
    /// The broadcaster being tracked.
    Broadcaster,
    /// Anyone else the follower follows.
    Other,
}

/// An explicit FIFO feed of bounded capacity.
///
/// This is the reference implementation of the feed semantics: new stories
/// enter at slot 1, everything below shifts down, and the story at the
/// capacity boundary falls off. [`replay_feed`] tracks the broadcaster's
/// rank with an integer counter instead (same semantics, no queue), and the
/// test suite holds the two implementations against each other.
#[derive(Debug, Clone)]
pub struct FeedState {
    capacity: usize,
    /// Newest first; at most `capacity` entries.
    slots: std::collections::VecDeque<(f64, StorySource)>,
}

impl FeedState {
    /// Creates an empty feed holding at most `capacity >= 1` stories.
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("feed capacity must be at least 1"));
        }
        Ok(FeedState {
            capacity,
            slots: std::collections::VecDeque::with_capacity(capacity),
        })
    }

    /// Inserts a story posted at `time`, evicting the bottom story if full.
    pub fn push(&mut self, time: f64, source: StorySource) {
        if self.slots.len() == self.capacity {
            self.slots.pop_back();
        }
        self.slots.push_front((time, source));
    }

    /// 1-based rank of the most recent broadcaster story, if it is still in
    /// the feed.
    pub fn broadcaster_rank(&self) -> Option<usize> {
        self.slots
            .iter()
            .position(|(_, s)| *s == StorySource::Broadcaster)
            .map(|idx| idx + 1)
    }

    /// Number of stories currently held.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    /// True when no story has been pushed yet.
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Maximum number of stories held.
    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Piecewise-constant record of the broadcaster's rank over `[0, horizon]`.
///
/// `None` means the broadcaster has no story in the feed (never posted, or
/// its latest story was evicted).
#[derive(Debug, Clone, PartialEq)]
pub struct RankTrajectory {
    horizon: f64,
    capacity: usize,
    /// `(start_time, rank)` segments; starts at time 0, strictly increasing
    /// start times, each segment extends to the next start (or the horizon).
    segments: Vec<(f64, Option<u32>)>,
}

impl RankTrajectory {
    /// Horizon covered, in hours.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Feed capacity the replay used.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// The `(start_time, rank)` segments, first one at time 0.
    pub fn segments(&self) -> &[(f64, Option<u32>)] {
        &self.segments
    }

    /// Rank in effect at time `t` in `[0, horizon]`.
    pub fn rank_at(&self, t: f64) -> Result<Option<u32>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        let idx = self.segments.partition_point(|(start, _)| *start <= t);
        Ok(self.segments[idx - 1].1)
    }
}

/// Replays a broadcaster stream against a competing stream through a FIFO
/// feed of the given capacity, producing the rank trajectory on
/// `[0, horizon]`.
///
/// All event times must lie in `[0, horizon]`. When both streams post at
/// the same instant the competing story is applied first, so the
/// broadcaster's fresh story still ends up at rank 1 (the pessimistic
/// ordering for the broadcaster's older story).
pub fn replay_feed(
    broadcaster: &EventSequence,
    others: &EventSequence,
    capacity: usize,
    horizon: f64,
) -> Result<RankTrajectory> {
    if capacity == 0 {
        return Err(Error::invalid("feed capacity must be at least 1"));
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::invalid(format!(
            "replay horizon must be positive and finite, got {horizon}"
        )));
    }
    for seq in [broadcaster, others] {
        if let Some(&last) = seq.times().last() {
            if last > horizon {
                return Err(Error::OutOfDomain { t: last, horizon });
            }
        }
    }

    let mut segments: Vec<(f64, Option<u32>)> = vec![(0.0, None)];
    let mut rank: Option<u32> = None;
    let record = |t: f64, rank: Option<u32>, segments: &mut Vec<(f64, Option<u32>)>| {
        let last = segments.last_mut().expect("segments start nonempty");
        if last.0 == t {
            last.1 = rank;
        } else if last.1 != rank {
            segments.push((t, rank));
        }
    };

    let own = broadcaster.times();
    let other = others.times();
    let (mut i, mut j) = (0, 0);
    while i < own.len() || j < other.len() {
        // Competing story first on ties.
        let take_other = j < other.len() && (i >= own.len() || other[j] <= own[i]);
        if take_other {
            let t = other[j];
            j += 1;
            if let Some(r) = rank {
                rank = if (r as usize) < capacity {
                    Some(r + 1)
                } else {
                    None
                };
                record(t, rank, &mut segments);
            }
        } else {
            let t = own[i];
            i += 1;
            rank = Some(1);
            record(t, rank, &mut segments);
        }
    }

    // Collapse any no-op segments produced by same-time updates.
    segments.dedup_by(|next, prev| prev.1 == next.1);
    Ok(RankTrajectory {
        horizon,
        capacity,
        segments,
    })
}

/// Measured visible time: total time (hours) the rank was at most `k`,
/// optionally weighted by an attention profile `s` sharing the horizon.
///
/// `k` must not exceed the replay capacity — ranks beyond it were evicted,
/// not tracked.
pub fn empirical_visibility(
    trajectory: &RankTrajectory,
    k: usize,
    s: Option<&PiecewiseConstantFn>,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    if k > trajectory.capacity() {
        return Err(Error::invalid(format!(
            "rank threshold {k} exceeds replay capacity {}",
            trajectory.capacity()
        )));
    }
    if let Some(profile) = s {
        if (profile.grid().horizon() - trajectory.horizon()).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "attention horizon {} vs trajectory horizon {}",
                profile.grid().horizon(),
                trajectory.horizon()
            )));
        }
    }
    let segs = trajectory.segments();
    let mut total = CompensatedSum::new();
    for (idx, &(start, rank)) in segs.iter().enumerate() {
        let visible = matches!(rank, Some(r) if (r as usize) <= k);
        if !visible {
            continue;
        }
        let end = segs
            .get(idx + 1)
            .map_or(trajectory.horizon(), |&(next, _)| next);
        match s {
            Some(profile) => total.add(profile.integrate(start, end.min(profile.grid().horizon()))?),
            None => total.add(end - start),
        }
    }
    Ok(total.value())
}

/// Draws a Poisson count with the given mean (mass over a piece).
fn poisson_count(rng: &mut ChaCha8Rng, mass: f64) -> u64 {
    if mass <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mass).expect("positive finite mass");
    dist.sample(rng) as u64
}

/// Samples event times on `[0, horizon)` from a piecewise-constant
/// intensity: per piece, a Poisson count with mean `rate * delta`, placed
/// uniformly. Returns a strictly increasing sequence.
pub(crate) fn sample_times(f: &PiecewiseConstantFn, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let grid = f.grid();
    let delta = grid.delta();
    let mut times = Vec::new();
    for (m, &rate) in f.values().iter().enumerate() {
        let n = poisson_count(rng, rate * delta);
        let start = grid.piece_start(m);
        for _ in 0..n {
            times.push(start + rng.random::<f64>() * delta);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    // Ties between independent uniforms are measure-zero but possible in
    // floating point; nudge the later one up so sequences stay strictly
    // increasing, dropping the (astronomically unlikely) spill past the
    // horizon.
    for idx in 1..times.len() {
        if times[idx] <= times[idx - 1] {
            times[idx] = next_after(times[idx - 1]);
        }
    }
    times.retain(|&t| t < grid.horizon());
    times
}

/// Smallest f64 strictly greater than `x`.
fn next_after(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// Samples one posting realization from `f`, reproducibly from `seed`.
///
/// The returned sequence carries the placeholder user id `sampled`; replay
/// and measurement never look at ids.
pub fn sample_poisson(f: &PiecewiseConstantFn, seed: u64) -> EventSequence {
    let mut rng = derive_rng(seed, &[stream::POISSON]);
    let times = sample_times(f, &mut rng);
    EventSequence::new(UserId::new("sampled").expect("static id"), times)
        .expect("sampled times are strictly increasing")
}

/// Builds an unattributed event sequence from pre-sampled times.
fn sequence_from(times: Vec<f64>) -> EventSequence {
    EventSequence::new(UserId::new("sampled").expect("static id"), times)
        .expect("sampled times are strictly increasing")
}

/// Monte Carlo estimate of (optionally attention-weighted) top-`k`
/// visibility: samples `runs` independent broadcaster and feed
/// realizations, replays each, and averages the measured visible time.
///
/// Returns `(mean, standard_error)` in hours. The feed capacity is
/// `max(DEFAULT_FEED_CAPACITY, k)`, so any `k >= 1` is measurable.
pub fn monte_carlo_visibility(
    lambda: &PiecewiseConstantFn,
    mu: &PiecewiseConstantFn,
    k: usize,
    s: Option<&PiecewiseConstantFn>,
    runs: u32,
    seed: u64,
) -> Result<(f64, f64)> {
    crate::grid::check_same_grid(lambda.grid(), mu.grid())?;
    if runs == 0 {
        return Err(Error::invalid("monte carlo needs at least one run"));
    }
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    let capacity = DEFAULT_FEED_CAPACITY.max(k);
    let horizon = lambda.grid().horizon();
    let samples: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng_b = derive_rng(seed, &[stream::MC_BROADCASTER, run as u64]);
            let mut rng_f = derive_rng(seed, &[stream::MC_FEED, run as u64]);
            let own = sequence_from(sample_times(lambda, &mut rng_b));
            let other = sequence_from(sample_times(mu, &mut rng_f));
            let trajectory = replay_feed(&own, &other, capacity, horizon)?;
            empirical_visibility(&trajectory, k, s)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_standard_error(&samples))
}

/// Visibility of a candidate schedule against *recorded* competing
/// traffic: for every recorded period (events already folded to
/// `[0, horizon]`) and every run, fresh broadcaster events are sampled from
/// `lambda` and replayed against the period's events as they happened.
///
/// Returns `(mean, standard_error)` across all period x run replays.
pub fn heldout_visibility(
    lambda: &PiecewiseConstantFn,
    recorded_periods: &[EventSequence],
    k: usize,
    s: Option<&PiecewiseConstantFn>,
    runs: u32,
    seed: u64,
) -> Result<(f64, f64)> {
    if recorded_periods.is_empty() {
        return Err(Error::invalid("held-out evaluation needs at least one recorded period"));
    }
    if runs == 0 {
        return Err(Error::invalid("held-out evaluation needs at least one run"));
    }
    if k == 0 {
        return Err(Error::invalid("rank threshold k must be at least 1"));
    }
    let capacity = DEFAULT_FEED_CAPACITY.max(k);
    let horizon = lambda.grid().horizon();
    let jobs: Vec<(usize, u32)> = (0..recorded_periods.len())
        .flat_map(|p| (0..runs).map(move |r| (p, r)))
        .collect();
    let samples: Vec<f64> = jobs
        .into_par_iter()
        .map(|(period, run)| {
            let mut rng =
                derive_rng(seed, &[stream::HELDOUT, period as u64, run as u64]);
            let own = sequence_from(sample_times(lambda, &mut rng));
            let trajectory = replay_feed(&own, &recorded_periods[period], capacity, horizon)?;
            empirical_visibility(&trajectory, k, s)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_standard_error(&samples))
}
