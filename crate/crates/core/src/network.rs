//! User identities, posting histories, and the follow graph.
//!
//! The follow graph is directed: an edge `broadcaster -> follower` means the
//! follower's feed receives the broadcaster's stories. A follower `v`
//! watching broadcaster `u` sees competition at the combined rate of all of
//! `v`'s other followees — intensities are additive because independent
//! Poisson streams superpose.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, PiecewiseConstantFn};

/// Opaque, nonempty user identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    /// Wraps an identifier; it must be nonempty and free of control
    /// characters (tabs and newlines delimit the on-disk formats).
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("user id must be nonempty"));
        }
        if id.chars().any(|c| c.is_control()) {
            return Err(Error::invalid(format!(
                "user id {id:?} contains control characters"
            )));
        }
        Ok(UserId(id))
    }

    /// The identifier as a string slice.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sorted timestamps (hours) of one user's posts.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    user: UserId,
    times: Vec<f64>,
}

impl EventSequence {
    /// Wraps a post history. Times must be finite, nonnegative, and
    /// strictly increasing.
    pub fn new(user: UserId, times: Vec<f64>) -> Result<Self> {
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::invalid(format!(
                    "event time at index {i} must be finite and nonnegative, got {t}"
                )));
            }
            if i > 0 && times[i - 1] >= t {
                return Err(Error::invalid(format!(
                    "event times must be strictly increasing; index {i} has {} then {t}",
                    times[i - 1],
                )));
            }
        }
        Ok(EventSequence { user, times })
    }

    /// Empty history for a user.
    pub fn empty(user: UserId) -> Self {
        EventSequence {
            user,
            times: Vec::new(),
        }
    }

    /// The posting user.
    pub fn user(&self) -> &UserId {
        &self.user
    }

    /// Timestamps in hours, strictly increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of posts.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when the history has no posts.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Directed follow graph with deterministic (sorted) iteration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Network {
    followers_of: BTreeMap<UserId, BTreeSet<UserId>>,
    followees_of: BTreeMap<UserId, BTreeSet<UserId>>,
}

impl Network {
    /// Builds a graph from `(broadcaster, follower)` edges.
    ///
    /// Self-follows are rejected; duplicate edges collapse to one.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId)>,
    {
        let mut network = Network::default();
        for (broadcaster, follower) in edges {
            network.add_edge(broadcaster, follower)?;
        }
        Ok(network)
    }

    /// Inserts one `broadcaster -> follower` edge.
    pub fn add_edge(&mut self, broadcaster: UserId, follower: UserId) -> Result<()> {
        if broadcaster == follower {
            return Err(Error::invalid(format!(
                "self-follow not allowed: {broadcaster}"
            )));
        }
        self.followees_of
            .entry(follower.clone())
            .or_default()
            .insert(broadcaster.clone());
        self.followers_of
            .entry(broadcaster)
            .or_default()
            .insert(follower);
        Ok(())
    }

    /// Users that follow `broadcaster`, in sorted order.
    pub fn followers(&self, broadcaster: &UserId) -> impl Iterator<Item = &UserId> {
        self.followers_of
            .get(broadcaster)
            .into_iter()
            .flat_map(|s| s.iter())
    }

    /// Users that `follower` follows, in sorted order.
    pub fn followees(&self, follower: &UserId) -> impl Iterator<Item = &UserId> {
        self.followees_of
            .get(follower)
            .into_iter()
            .flat_map(|s| s.iter())
    }

    /// True when `follower` follows `broadcaster`.
    pub fn follows(&self, follower: &UserId, broadcaster: &UserId) -> bool {
        self.followees_of
            .get(follower)
            .is_some_and(|s| s.contains(broadcaster))
    }

    /// All users that appear on either side of an edge, sorted, deduplicated.
    pub fn users(&self) -> BTreeSet<UserId> {
        let mut all: BTreeSet<UserId> = self.followers_of.keys().cloned().collect();
        all.extend(self.followees_of.keys().cloned());
        all
    }

    /// Number of distinct edges.
    pub fn edge_count(&self) -> usize {
        self.followers_of.values().map(|s| s.len()).sum()
    }
}

/// Combined posting rate of everyone `follower` follows except
/// `broadcaster` — the competition `broadcaster`'s stories face in that feed.
///
/// Requires `follower` to actually follow `broadcaster`, and an intensity
/// entry for every other followee (absent users should carry an explicit
/// zero function). All intensities must share one grid.
pub fn feed_rate_excluding(
    network: &Network,
    intensities: &BTreeMap<UserId, PiecewiseConstantFn>,
    broadcaster: &UserId,
    follower: &UserId,
) -> Result<PiecewiseConstantFn> {
    if !network.follows(follower, broadcaster) {
        return Err(Error::invalid(format!(
            "{follower} does not follow {broadcaster}"
        )));
    }
    let mut sum: Option<PiecewiseConstantFn> = None;
    for followee in network.followees(follower) {
        if followee == broadcaster {
            continue;
        }
        let f = intensities
            .get(followee)
            .ok_or_else(|| Error::UnknownUser(format!("no intensity for {followee}")))?;
        sum = Some(match sum {
            None => f.clone(),
            Some(acc) => {
                check_same_grid(acc.grid(), f.grid())?;
                acc.add(f)?
            }
        });
    }
    match sum {
        Some(f) => Ok(f),
        // A follower following only the broadcaster faces no competition;
        // the grid comes from the broadcaster's own intensity entry.
        None => {
            let own = intensities
                .get(broadcaster)
                .ok_or_else(|| Error::UnknownUser(format!("no intensity for {broadcaster}")))?;
            Ok(PiecewiseConstantFn::zero(own.grid()))
        }
    }
}
