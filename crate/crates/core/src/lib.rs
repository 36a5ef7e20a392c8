//! Stochastic viability for discrete-time controlled systems.
//!
//! Given a finite controlled Markov model with state constraints `A(t)` and a
//! target `A(T)`, the crate computes the maximal probability `V(t, x)` of
//! staying in the constraints until the horizon, the level sets
//! `{x : V(t, x) >= beta}` (stochastic viability kernels), and feedback
//! policies attaining the maximum. Results can be cross-checked by exact
//! policy evaluation, brute-force policy enumeration and Monte Carlo.

pub mod dp;
pub mod error;
pub mod expr;
pub mod io;
pub mod kernel;
pub mod mc;
pub mod model;
pub mod oracle_example;

pub use dp::{
    bellman_step, brute_force_value, evaluate_policy, solve, terminal_slice, ArgmaxPolicy,
    ValueFunction, ValueSlice,
};
pub use error::{Error, Result};
pub use kernel::{
    kernel_slice, select_feedback, viable_feedback_check, FeedbackPolicy, KernelSlice, TieBreak,
};
pub use mc::{
    estimate_probability, sample_scenario, simulate, ProbabilityEstimate, Scenario, Trajectory,
};
pub use model::{three_state_example, three_state_example_def, Model, ModelDef};
