//! Data-driven verification and synthesis of finite-horizon dissipativity for
//! SISO discrete-time LTI systems, from a single measured input-output
//! trajectory.
//!
//! The workflow: measure one persistently exciting trajectory of the unknown
//! plant, build a [`DataPage`] (Hankel matrix plus zero-initial-condition
//! coefficient basis), then
//!
//! - verify open-loop dissipativity with [`check_open_loop`],
//! - parametrize and validate the standard feedback loop with a given
//!   controller impulse response ([`closed_loop`]),
//! - synthesize structured controllers (PI, FIR) meeting closed-loop
//!   dissipativity specifications by assembling a quadratic matrix
//!   inequality ([`synthesis`]) and solving it ([`qmi`]).
//!
//! Model-based simulation and brute-force oracles live in [`lti`]; they are
//! used for data generation and for testing the data-driven verdicts, never
//! inside them.

pub mod closed_loop;
pub mod dissipativity;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod qmi;
pub mod synthesis;
pub mod trajectory_algebra;

pub use closed_loop::{
    closed_loop_l2_gain, closed_loop_map, closed_loop_response, m_matrix, validate_closed_loop,
    validate_spec, Channel, ClosedLoopMap,
};
pub use dissipativity::{
    block_supply, check_open_loop, estimate_feedthrough, finite_horizon_l2_gain,
    oracle_check_dissipativity, oracle_l2_gain, Certificate, SupplyRate,
};
pub use error::{Error, Result};
pub use lti::{
    feedback_interconnect, feedback_interconnect_output, fir_controller, impulse_response,
    pe_input_uniform, pi_controller, pure_gain, random_stable_siso, simulate, two_tank_plant,
    unit_delay, ImpulseResponse, LoopOutput, StateSpace, Trajectory,
};
pub use qmi::{direct_search, evaluate, solve_feasibility, InnerSolver, SolveReport, SolverOptions};
pub use synthesis::{
    assemble_qmi, augment, constant_filter, fir_basis, first_order_lowpass_filter, pi_basis,
    small_gain_constraint, ControllerBasis, DissipativitySpec, QmiProblem,
};
pub use trajectory_algebra::{
    build_data_page, hankel, is_persistently_exciting, kernel_basis, max_pe_order, stacked_hankel,
    toeplitz, truncation_selectors, DataPage, PeReport,
};
