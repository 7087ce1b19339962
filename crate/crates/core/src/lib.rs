//! GP opponent prediction and stochastic MPC for overtaking on a straight
//! race track.
//!
//! The planner learns the target vehicle's (TV) reaction to the ego vehicle
//! (EV) with a Gaussian process, samples TV trajectories from it, turns their
//! spread into tightened safety rectangles and solves a condensed QP for the
//! EV inputs every cycle. [`sim::run_scenario`] closes the loop against a
//! simple blocking opponent.

pub mod config;
pub mod constraints;
pub mod error;
pub mod gp;
pub mod qp;
pub mod sim;
pub mod smpc;
pub mod trace;
pub mod tv;
pub mod vehicle;

pub use config::{load_config, ScenarioConfig, SWEEPABLE};
pub use constraints::{ConstraintCase, HalfPlaneConstraint, RiskParams, SafetyRectangle};
pub use error::{Error, Result};
pub use gp::{GpModel, TvPredictionStats};
pub use qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};
pub use sim::{run_scenario, RunResult, RunSummary, StepRecord};
pub use smpc::{SmpcConfig, SmpcController};
pub use trace::{read_trace_file, write_trace_file, TraceHeader, TRACE_COLUMNS};
pub use tv::{CommittedDirection, TvPolicyState};
pub use vehicle::{EvInput, EvState, TvState, VehicleGeometry};

/// Version string written into trace headers and summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
