//! Signal temporal logic tasks compiled into time-varying, higher-order
//! control barrier functions for leader-follower networks.
//!
//! The pipeline is: parse a task ([`stl`]), build the composite barrier and
//! its constraint chain ([`barrier`]), describe the network ([`network`]),
//! synthesize the leader input ([`control`]) and simulate / monitor the
//! closed loop ([`sim`]). Scenario files tie everything together
//! ([`scenario`]).

pub mod barrier;
pub mod control;
pub mod error;
pub mod network;
pub mod scenario;
pub mod sim;
pub mod state;
pub mod stl;

pub use barrier::{
    build_barrier, build_psi_chain, smooth_min, BarrierEval, ChainEval, ChainOrder, ClassK,
    EnvelopeInit, OperatorBarrier, PsiChain, TimeVaryingBarrier,
};
pub use control::{
    assemble_constraint, epsilon_max_bound, fixed_time_bound, leader_control, solve_min_norm,
    Branch, Certificate, ConstraintRow, ControlOutput, ControllerParams, FixedTimeGains, InfoMode,
    LeaderController,
};
pub use error::{Error, Result};
pub use network::{Dynamics, Graph};
pub use scenario::{load_scenario, Scenario};
pub use sim::{integrate, run_scenario, RunReport, Trajectory};
pub use state::{Order, StateLayout};
pub use stl::{evaluate, parse_formula, switching_schedule, StlFormula, SwitchSchedule};
