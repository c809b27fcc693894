//! Backward integration of the costate equation.
//!
//! The costate obeys a terminal-value equation whose right-hand side
//! sums, over delay slots, the state partials of the Hamiltonian with
//! every argument advanced by that slot's delay. The costate vanishes on
//! and beyond the final time, so advanced terms that would read past the
//! last node are dropped.

use nalgebra::DVector;
use thiserror::Error;

use crate::dde::gather_tuple;
use crate::grid::Grid;
use crate::problem::ProblemDef;
use crate::trajectory::{History, Trajectory};

#[derive(Debug, Error)]
pub enum AdjointError {
    #[error("costate became non-finite at node {node} (t = {t})")]
    NonFiniteCostate { node: usize, t: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state or control trajectory lives on a different grid")]
    GridMismatch,
    #[error("history does not cover the longest delay for this grid")]
    HistoryTooShort,
}

/// Control value used at `node`, extending the last interval's constant
/// value to the closed right endpoint. The cost quadrature never reads
/// the final node's control, so the extension is free of consequence.
fn control_at<'a>(control: &'a Trajectory, node: usize) -> &'a DVector<f64> {
    let last = control.num_nodes() - 1;
    if node == last && last > 0 {
        control.node(last - 1)
    } else {
        control.node(node)
    }
}

/// Integrates the costate backward from zero at the final node.
///
/// Stepping from node `j + 1` to node `j`, the update adds, for each
/// delay slot `s` with node offset `d_s`, the term
/// `dt * (dl/dx_s + (df/dx_s)^T lambda)` with every argument evaluated
/// at node `j + 1 + d_s`; terms past the final node are dropped. All
/// advanced costate values are already known when stepping backward.
///
/// If the problem carries a terminal cost, the caller is expected to have
/// absorbed it into the running cost beforehand.
pub fn integrate_costate(
    problem: &ProblemDef,
    grid: &Grid,
    state: &Trajectory,
    control: &Trajectory,
    history: &History,
) -> Result<Trajectory, AdjointError> {
    if state.grid() != grid || control.grid() != grid {
        return Err(AdjointError::GridMismatch);
    }
    if state.dim() != problem.state_dim() || control.dim() != problem.control_dim() {
        return Err(AdjointError::DimensionMismatch(format!(
            "state dim {} / control dim {} vs problem ({}, {})",
            state.dim(),
            control.dim(),
            problem.state_dim(),
            problem.control_dim()
        )));
    }
    if history.dim() != problem.state_dim() {
        return Err(AdjointError::DimensionMismatch(
            "history dimension differs from the state dimension".into(),
        ));
    }
    if !history.covers(grid) {
        return Err(AdjointError::HistoryTooShort);
    }

    let n = problem.state_dim();
    let last = grid.num_steps();
    let dt = grid.dt();
    let mut lambda = Trajectory::zeros(grid, n);
    let mut xs = vec![DVector::zeros(n); grid.num_delays() + 1];

    for j in (0..last).rev() {
        let mut acc = lambda.node(j + 1).clone();
        for slot in 0..=grid.num_delays() {
            let advanced = j + 1 + grid.slot_offset(slot);
            if advanced > last {
                continue;
            }
            debug_assert!(advanced <= last, "costate read past the final node");
            let t = grid.node_time(advanced);
            gather_tuple(grid, state, history, advanced, &mut xs);
            let u = control_at(control, advanced);
            let lam_adv = lambda.node(advanced);
            acc += dt
                * (problem.state_gradient(t, &xs, u, slot)
                    + problem.state_jacobian(t, &xs, u, slot).transpose() * lam_adv);
        }
        if acc.iter().any(|v| !v.is_finite()) {
            return Err(AdjointError::NonFiniteCostate { node: j, t: grid.node_time(j) });
        }
        lambda.set_node(j, acc);
    }
    Ok(lambda)
}
