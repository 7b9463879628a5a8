//! Output file schemas: solution and report JSON documents, plus helpers
//! for deterministic serialization.
//!
//! Both documents carry a format version and the resolved [`RunConfig`]
//! that produced them. Serialization is deterministic — ordered fields,
//! canonical float formatting — so identical invocations produce identical
//! bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use feedshape::formats::GridSpec;
use feedshape::optimize::Objective;
use feedshape::{Error, Result, UserId};

use crate::config::RunConfig;

/// Version stamp for solution documents.
pub const SOLUTION_FORMAT_VERSION: u32 = 1;
/// Version stamp for report documents.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Objective tag as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Total attention-weighted visibility over all followers.
    Avm,
    /// Sum over the `worst` least-visible followers.
    Mvm {
        /// How many worst-off followers the objective sums.
        worst: usize,
    },
}

impl ObjectiveSpec {
    /// The library-level objective this tag denotes.
    pub fn objective(self) -> Objective {
        match self {
            ObjectiveSpec::Avm => Objective::AverageVisibility,
            ObjectiveSpec::Mvm { worst } => Objective::MinimumVisibility { worst },
        }
    }
}

/// One follower's value in a solution document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerValue {
    /// Follower id.
    pub id: UserId,
    /// Attention-weighted expected visible hours.
    pub visibility: f64,
}

/// A posting schedule with its provenance: the output of the `optimize`
/// and `baseline` commands and the input of `evaluate` and `trajectory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    /// Schema version; must equal [`SOLUTION_FORMAT_VERSION`].
    pub format_version: u32,
    /// Resolved configuration of the producing command.
    pub config: RunConfig,
    /// Time grid of the schedule.
    pub grid: GridSpec,
    /// Broadcaster the schedule belongs to.
    pub broadcaster: UserId,
    /// Rank threshold the objective used.
    pub k: usize,
    /// Budget constraint (expected posts per period).
    pub budget: f64,
    /// Objective that was maximized.
    pub objective: ObjectiveSpec,
    /// How the schedule was produced: `gradient` or a baseline kind.
    pub method: String,
    /// Objective value attained.
    pub objective_value: f64,
    /// The schedule: posts per hour, one rate per grid piece.
    pub rates: Vec<f64>,
    /// Per-follower visibility at `rates`.
    pub per_follower: Vec<FollowerValue>,
    /// Objective value per iteration (solvers) or the single final value
    /// (baselines).
    pub trace: Vec<f64>,
    /// Iterations performed (0 for closed-form baselines).
    pub iterations: usize,
    /// Whether the stopping rule fired before the iteration cap.
    pub converged: bool,
}

impl SolutionFile {
    /// Structural validation: version, grid, rate vector shape and range.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != SOLUTION_FORMAT_VERSION {
            return Err(Error::InvalidFile(format!(
                "unsupported solution format_version {} (expected {SOLUTION_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let grid = self
            .grid
            .grid()
            .map_err(|e| Error::InvalidFile(format!("bad grid header: {e}")))?;
        if self.rates.len() != grid.pieces() {
            return Err(Error::InvalidFile(format!(
                "{} rates for a grid of {} pieces",
                self.rates.len(),
                grid.pieces()
            )));
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidFile(
                "rates must be finite and nonnegative".to_string(),
            ));
        }
        if self.k == 0 {
            return Err(Error::InvalidFile("rank threshold k must be at least 1".to_string()));
        }
        if !self.budget.is_finite() || self.budget <= 0.0 {
            return Err(Error::InvalidFile(format!(
                "budget must be positive and finite, got {}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Parses and validates a solution document.
pub fn parse_solution_bytes(bytes: &[u8]) -> Result<SolutionFile> {
    let solution: SolutionFile = serde_json::from_slice(bytes)?;
    solution.validate()?;
    Ok(solution)
}

/// Reads a solution file.
pub fn read_solution(path: &Path) -> Result<SolutionFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_solution_bytes(&bytes)
}

/// One follower's measured value in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportEntry {
    /// Follower id.
    pub id: UserId,
    /// Mean attention-weighted visible hours.
    pub mean: f64,
    /// Standard error of the mean (absent for the closed-form scheme).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
}

/// The output of the `evaluate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    /// Schema version; must equal [`REPORT_FORMAT_VERSION`].
    pub format_version: u32,
    /// Resolved configuration of the producing command.
    pub config: RunConfig,
    /// Evaluation scheme: `theoretical`, `simulated`, or `heldout`.
    pub scheme: String,
    /// Time grid of the evaluated schedule.
    pub grid: GridSpec,
    /// Broadcaster the schedule belongs to.
    pub broadcaster: UserId,
    /// Rank threshold.
    pub k: usize,
    /// Per-follower measurements.
    pub per_follower: Vec<ReportEntry>,
    /// Sum of the per-follower means.
    pub total: f64,
    /// Monte Carlo runs per follower (absent for the closed-form scheme).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<u32>,
}

/// Serializes a document as pretty-printed JSON with a trailing newline and
/// writes it to `path`.
pub fn write_json<T: Serialize>(path: &Path, document: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(document)?;
    bytes.push(b'\n');
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))
}
