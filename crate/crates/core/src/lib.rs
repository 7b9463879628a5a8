//! Exact feed-visibility computation and budgeted posting-schedule
//! optimization for FIFO social feeds.
//!
//! A broadcaster posts stories according to an inhomogeneous Poisson process
//! with piecewise-constant intensity `lambda(t)`. Each follower's feed is a
//! FIFO queue that also receives stories from everyone else the follower
//! follows, at combined piecewise-constant rate `mu(t)`. A story is *visible*
//! when it sits among the top `k` slots of the feed.
//!
//! The crate provides, in dependency order:
//!
//! * [`grid`] — time grids and piecewise-constant rate functions;
//! * [`network`] — user identities, event sequences, and the follow graph;
//! * [`visibility`] — the exact probability `f_k(t)` that the broadcaster
//!   holds a top-`k` slot, via per-interval closed forms, plus a slow
//!   quadrature oracle used for cross-checking;
//! * [`simulate`] — a stochastic feed simulator that estimates the same
//!   quantities by Monte Carlo replay;
//! * [`optimize`] — visibility gradients, budget projection, and the
//!   projected-gradient solvers for the average- and minimum-visibility
//!   objectives, along with reference baseline allocators;
//! * [`fit`] — estimation of intensities and attention profiles from event
//!   logs, problem assembly from a follow graph, and synthetic corpus
//!   generation;
//! * [`formats`] — readers and writers for the on-disk interchange formats
//!   (event logs, follow graphs, fitted-profile files).
//!
//! All randomness is driven by explicit integer seeds through named
//! sub-streams (see [`seeds`]), so every computation in this crate is
//! reproducible bit-for-bit across runs and thread counts.

pub mod error;
pub mod fit;
pub mod formats;
pub mod grid;
pub mod math;
pub mod network;
pub mod optimize;
pub mod seeds;
pub mod simulate;
pub mod visibility;

pub use error::{Error, Result};
pub use grid::{PiecewiseConstantFn, TimeGrid};
pub use network::{EventSequence, Network, UserId};
