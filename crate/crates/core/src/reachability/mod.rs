//! Offline Hamilton-Jacobi precomputation over 2D relative subsystems.
//!
//! * [`solve_invariant_set`] gives the infinite-horizon value function whose
//!   zero sublevel set is the smallest controlled-invariant set around the
//!   origin; its position projection is a planner's tracking error bound.
//! * [`solve_ssb`] grows a backward reachable tube from a small invariant
//!   set until it covers a larger one; its projection is the switching
//!   safety bound.
//! * [`AnalyticInvariantSet`] is the closed-form double-integrator answer
//!   used to cross-check the grid solver.

mod analytic;
mod grid;
mod io;
mod solver;
mod value;

pub use analytic::AnalyticInvariantSet;
pub use grid::{Grid2, MIN_CELLS};
pub use io::{
    load_value_function, read_value_function, save_value_function, write_value_function, FORMAT_VERSION, MAGIC,
};
pub use solver::{hamiltonian, solve_invariant_set, solve_ssb, SolverSettings};
pub use value::{
    extract_bound, extract_switching_bound, zero_level_crossings, ValueFunction2D, ValueKind, ValueSample,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Params(#[from] DynamicsError),
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invariant set touches the grid boundary; enlarge the domain (set extent r in [{r_lo:.3}, {r_hi:.3}], v in [{v_lo:.3}, {v_hi:.3}])")]
    TouchesBoundary { r_lo: f64, r_hi: f64, v_lo: f64, v_hi: f64 },
    #[error("tube did not contain the larger invariant set within the {cap} s horizon cap")]
    HorizonExceeded { cap: f64 },
    #[error("value functions are defined on different grids")]
    GridMismatch,
    #[error("smaller invariant set is not contained in the larger one")]
    NotNested,
    #[error("value function sublevel set is empty")]
    EmptySet,
    #[error("value function not converged")]
    Unconverged,
    #[error("state ({r:.4}, {v:.4}) is outside the grid domain")]
    OutOfDomain { r: f64, v: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed value-function file: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("parameter mismatch: {0}")]
    ParamsMismatch(String),
}

/// Axis-aligned half-widths of a tracking or switching bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyBound {
    pub ex: f64,
    pub ey: f64,
    pub ez: f64,
}

impl SafetyBound {
    pub fn new(ex: f64, ey: f64, ez: f64) -> Self {
        Self { ex, ey, ez }
    }

    pub fn uniform(e: f64) -> Self {
        Self::new(e, e, e)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.ex, self.ey, self.ez]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|e| e.is_finite() && *e > 0.0)
    }

    /// Component-wise `self ⊆ other`.
    pub fn within(&self, other: &SafetyBound) -> bool {
        self.ex <= other.ex && self.ey <= other.ey && self.ez <= other.ez
    }

    pub fn min_extent(&self) -> f64 {
        self.ex.min(self.ey).min(self.ez)
    }

    pub fn max_extent(&self) -> f64 {
        self.ex.max(self.ey).max(self.ez)
    }

    pub fn component_max(&self, other: &SafetyBound) -> SafetyBound {
        SafetyBound::new(self.ex.max(other.ex), self.ey.max(other.ey), self.ez.max(other.ez))
    }
}
