//! Time-optimal quadrotor trajectories through ordered waypoints.
//!
//! The problem is transcribed by multiple shooting with RK4 and progress
//! variables whose decrements are tied to waypoint proximity through a
//! relaxed complementarity constraint ([`transcription`]). It is solved by
//! the interior-point homotopy in `cpc-nlp`, starting from the guesses in
//! [`initializer`]. [`pointmass`] holds closed-form and convex point-mass
//! references, [`experiments`] the published scenarios.

pub mod derivatives;
pub mod experiments;
pub mod initializer;
pub mod io;
pub mod pointmass;
pub mod quad_model;
pub mod track;
pub mod transcription;

pub use quad_model::{QuadConfig, QuadState, RotorThrusts};
pub use track::{Terminal, Track};
pub use transcription::{assemble, assemble_fixed_allocation, NlpProblem, Trajectory};
