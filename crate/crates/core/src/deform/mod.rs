//! Handle weights, membrane energy, per-view solves, voting and ARAP.

use thiserror::Error;

pub mod arap;
pub mod membrane;
pub mod solve;
pub mod weights;

pub use arap::{arap_deform, ArapParams, ArapResult};
pub use membrane::{membrane_energy, MembraneMaterial};
pub use solve::{solve_view, vote_multiview, SolveParams, StopReason, ViewSolveResult};
pub use weights::{apply_displacements, apply_handles, biharmonic_weights, biharmonic_weights_anchored, WeightField};

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("no handles")]
    NoHandles,
    #[error("singular system: a component has no constraint")]
    SingularSystem,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vertex {0} is not a handle")]
    UnknownHandle(usize),
    #[error("vertex {0} listed twice as a handle")]
    DuplicateHandle(usize),
    #[error("objective is not finite")]
    NonFiniteObjective,
    #[error("line search failed at iteration {iteration} (objective {objective})")]
    LineSearchFailed { iteration: usize, objective: f64 },
    #[error("no view results to vote on")]
    EmptyResults,
    #[error("view results disagree on handle ordering")]
    OrderingMismatch,
    #[error("need at least three non-collinear constraints")]
    UnderConstrained,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

pub type Result<T, E = DeformError> = std::result::Result<T, E>;
