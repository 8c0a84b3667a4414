//! Sparse nonlinear programming for trajectory optimization.
//!
//! The crate provides forward-mode derivatives ([`ad`]), a sparse LDL^T
//! factorization ([`ldl`]), a primal-dual interior-point solver ([`ipm`]),
//! a complementarity-relaxation homotopy on top of it ([`homotopy`]) and
//! solver-independent certificates ([`check`]).

pub mod ad;
pub mod check;
pub mod homotopy;
pub mod ipm;
pub mod ldl;
pub mod log;
pub mod problem;
mod restoration;
mod scaling;

pub use check::{fd_check, fd_check_columns, fd_check_gradient, kkt_breakdown, kkt_residual, KktBreakdown};
pub use homotopy::{geometric_schedule, homotopy_solve, ConfigError, SolverConfig, SolverReport, StageReport};
pub use ipm::{IterationRecord, PrimalDual, SolveOutcome, SolveStatus, SolverOptions};
pub use problem::{Multipliers, Nlp, Relaxable};
