//! Optimal control of dynamics with multiple discrete state delays.
//!
//! The crate discretizes a delayed optimal control problem on a uniform
//! grid, integrates state and costate by the method of steps, and runs a
//! proximally regularized Hamiltonian minimization until the control
//! update falls below tolerance.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod dde;
pub mod grid;
pub mod hamiltonian;
pub mod models;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod trajectory;

pub use adjoint::{integrate_costate, AdjointError};
pub use config::{CZeroDiag, InnerMinSettings, SolverConfig};
pub use control::{project, ControlSet, ProjectionError};
pub use dde::{
    convergence_order, integrate_forward, ConvergenceReport, DdeError, IntegratorSettings,
    OrderEstimate, Scheme,
};
pub use grid::{build_grid, Grid, GridError};
pub use hamiltonian::{
    eval_h, eval_k, grad_h_u, minimize_k, InnerStatus, MinimizeOutcome, RegMatrix,
};
pub use models::lq::{canonical_lq, canonical_lq_setup, lq_test_problem, LqProblem};
pub use models::sidarthe_v::{sidarthe_v_control_set, sidarthe_v_problem, SidartheVParams};
pub use models::sirv::{sirv_control_set, sirv_problem, SirvParams};
pub use models::ModelError;
pub use oracle::{
    brute_force_lq, fd_check, reference_trajectory, riccati_lq_reference, FdReport,
    OracleError,
};
pub use problem::{ProblemDef, ProblemDefError, TerminalCost};
pub use solver::{
    absorb_terminal_cost, eval_cost, eval_total_cost, optimality_residual, solve,
    termination_bound, IterationRecord, Solution, SolveError, Termination,
};
pub use trajectory::{delayed_state, History, Trajectory};

pub use nalgebra::{DMatrix, DVector};
