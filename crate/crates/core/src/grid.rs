//! Time grids and piecewise-constant rate functions.
//!
//! All model quantities — posting intensities, competing-feed rates,
//! attention profiles — live on a shared uniform grid: the horizon `[0, T)`
//! hours split into `M` equal pieces of width `delta = T / M`. A
//! [`PiecewiseConstantFn`] holds one nonnegative value per piece; a grid
//! boundary belongs to the piece on its right.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::CompensatedSum;

/// A uniform partition of the horizon `[0, T)` into `M` equal pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    pieces: usize,
}

impl TimeGrid {
    /// Creates a grid over `[0, horizon)` hours with `pieces` equal pieces.
    ///
    /// `horizon` must be positive and finite; `pieces` must be at least 1.
    pub fn new(horizon: f64, pieces: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::invalid(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if pieces == 0 {
            return Err(Error::invalid("grid must have at least one piece"));
        }
        Ok(TimeGrid { horizon, pieces })
    }

    /// Horizon `T` in hours.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of pieces `M`.
    pub fn pieces(&self) -> usize {
        self.pieces
    }

    /// Piece width `delta = T / M` in hours.
    pub fn delta(&self) -> f64 {
        self.horizon / self.pieces as f64
    }

    /// Left boundary of piece `m`.
    pub fn piece_start(&self, m: usize) -> f64 {
        debug_assert!(m <= self.pieces);
        self.delta() * m as f64
    }

    /// Index of the piece containing `t`, for `0 <= t < T`.
    ///
    /// A boundary time belongs to the piece on its right, so
    /// `piece_index(delta) == 1`. Times at or past the horizon (or negative,
    /// or NaN) are domain errors.
    pub fn piece_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        // Truncating t / delta disagrees with piece_start by at most one
        // piece when m * delta rounds; nudge so that piece m is exactly
        // [piece_start(m), piece_start(m + 1)), with the last piece running
        // to the horizon.
        let mut index = ((t / self.delta()) as usize).min(self.pieces - 1);
        if index > 0 && t < self.piece_start(index) {
            index -= 1;
        } else if index + 1 < self.pieces && t >= self.piece_start(index + 1) {
            index += 1;
        }
        Ok(index)
    }
}

/// A nonnegative piecewise-constant function on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl PiecewiseConstantFn {
    /// Wraps per-piece values; `values.len()` must equal the piece count and
    /// every value must be finite and nonnegative.
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.pieces() {
            return Err(Error::invalid(format!(
                "expected {} piece values, got {}",
                grid.pieces(),
                values.len()
            )));
        }
        for (m, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "piece {m} value must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(PiecewiseConstantFn { grid, values })
    }

    /// Constant function equal to `value` everywhere.
    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.pieces()])
    }

    /// The zero function.
    pub fn zero(grid: TimeGrid) -> Self {
        PiecewiseConstantFn {
            values: vec![0.0; grid.pieces()],
            grid,
        }
    }

    /// The grid this function lives on.
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Per-piece values, in piece order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at time `t` in `[0, T)`; boundaries take the right piece.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.piece_index(t)?])
    }

    /// Exact integral over `[t0, t1]`, both within `[0, T]`.
    ///
    /// Computed as the sum of value × overlap over the covered pieces, so it
    /// is exact up to rounding (no quadrature involved).
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        let horizon = self.grid.horizon();
        if !(t0 >= 0.0 && t0 <= horizon) {
            return Err(Error::OutOfDomain { t: t0, horizon });
        }
        if !(t1 >= 0.0 && t1 <= horizon) {
            return Err(Error::OutOfDomain { t: t1, horizon });
        }
        if t0 > t1 {
            return Err(Error::invalid(format!(
                "integration bounds out of order: {t0} > {t1}"
            )));
        }
        let delta = self.grid.delta();
        let first = ((t0 / delta) as usize).min(self.grid.pieces() - 1);
        let mut acc = CompensatedSum::new();
        for m in first..self.grid.pieces() {
            let lo = self.grid.piece_start(m).max(t0);
            let hi = (self.grid.piece_start(m) + delta).min(t1);
            if hi <= lo {
                if lo >= t1 {
                    break;
                }
                continue;
            }
            acc.add(self.values[m] * (hi - lo));
        }
        Ok(acc.value())
    }

    /// Integral over the whole horizon, `delta * sum(values)`.
    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.value() * self.grid.delta()
    }

    /// Pointwise sum with `other`; both functions must share a grid.
    pub fn add(&self, other: &PiecewiseConstantFn) -> Result<PiecewiseConstantFn> {
        check_same_grid(self.grid, other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        PiecewiseConstantFn::new(self.grid, values)
    }

    /// Pointwise product with a nonnegative scalar.
    pub fn scale(&self, factor: f64) -> Result<PiecewiseConstantFn> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::invalid(format!(
                "scale factor must be finite and nonnegative, got {factor}"
            )));
        }
        PiecewiseConstantFn::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }
}

/// Errors unless the two grids are identical (same horizon and piece count).
pub fn check_same_grid(a: TimeGrid, b: TimeGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "horizon {} / {} pieces vs horizon {} / {} pieces",
            a.horizon(),
            a.pieces(),
            b.horizon(),
            b.pieces()
        )));
    }
    Ok(())
}
