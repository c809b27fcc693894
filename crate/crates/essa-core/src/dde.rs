//! Forward integration of the delayed dynamics by the method of steps.
//!
//! Because every delay is an exact node multiple, a delayed lookup is
//! plain index arithmetic into the trajectory computed so far, falling
//! back to the history before the horizon start. The control is
//! piecewise constant: the value at node `j` acts on `[t_j, t_{j+1})`.

use log::{debug, warn};
use nalgebra::DVector;
use thiserror::Error;

use crate::grid::{build_grid, Grid};
use crate::problem::ProblemDef;
use crate::trajectory::{delayed_state, History, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    Heun2,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub scheme: Scheme,
    /// Clamp negative state components to zero after each step. Off by
    /// default; every clip is logged.
    pub nonneg_clip: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings { scheme: Scheme::ExplicitEuler, nonneg_clip: false }
    }
}

#[derive(Debug, Error)]
pub enum DdeError {
    #[error("state became non-finite at node {node} (t = {t})")]
    NonFiniteState { node: usize, t: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("history does not cover the longest delay for this grid")]
    HistoryTooShort,
    #[error("control trajectory lives on a different grid")]
    GridMismatch,
    #[error("grid refinement failed: {0}")]
    Refinement(String),
}

fn check_inputs(
    problem: &ProblemDef,
    grid: &Grid,
    control: &Trajectory,
    history: &History,
) -> Result<(), DdeError> {
    if control.grid() != grid {
        return Err(DdeError::GridMismatch);
    }
    if control.dim() != problem.control_dim() {
        return Err(DdeError::DimensionMismatch(format!(
            "control dim {} != problem control dim {}",
            control.dim(),
            problem.control_dim()
        )));
    }
    if history.dim() != problem.state_dim() {
        return Err(DdeError::DimensionMismatch(format!(
            "history dim {} != problem state dim {}",
            history.dim(),
            problem.state_dim()
        )));
    }
    if grid.num_delays() != problem.num_delays() {
        return Err(DdeError::DimensionMismatch(format!(
            "grid carries {} delays, problem declares {}",
            grid.num_delays(),
            problem.num_delays()
        )));
    }
    if !history.covers(grid) {
        return Err(DdeError::HistoryTooShort);
    }
    Ok(())
}

/// Gathers the stacked delayed-state tuple at `node` into `buf`.
pub(crate) fn gather_tuple(
    grid: &Grid,
    state: &Trajectory,
    history: &History,
    node: usize,
    buf: &mut [DVector<f64>],
) {
    for slot in 0..=grid.num_delays() {
        buf[slot].copy_from(delayed_state(state, history, node, slot));
    }
}

/// Computes the state at `node + 1` from the trajectory filled through
/// `node`, reading only nodes `<= node` (plus history). Returns the new
/// state and the number of components clipped at zero.
///
/// Both the plain forward solve and the interleaved sweep in the outer
/// iteration advance through this one function, so a re-integration of a
/// returned control reproduces the stored trajectory bit for bit.
pub(crate) fn advance_node(
    problem: &ProblemDef,
    grid: &Grid,
    state: &Trajectory,
    history: &History,
    node: usize,
    u: &DVector<f64>,
    settings: &IntegratorSettings,
) -> Result<(DVector<f64>, usize), DdeError> {
    let n = problem.state_dim();
    let slots = grid.num_delays() + 1;
    let dt = grid.dt();
    let t = grid.node_time(node);

    let mut xs = vec![DVector::zeros(n); slots];
    gather_tuple(grid, state, history, node, &mut xs);
    let f0 = problem.dynamics(t, &xs, u);

    let mut next = match settings.scheme {
        Scheme::ExplicitEuler => state.node(node) + dt * f0,
        Scheme::Heun2 => {
            let predictor = state.node(node) + dt * &f0;
            // Corrector slope at the advanced node: delayed slots are
            // already known there, the current slot uses the predictor.
            let t_next = grid.node_time(node + 1);
            let mut xs_next = xs;
            xs_next[0].copy_from(&predictor);
            for slot in 1..slots {
                let offset = grid.slot_offset(slot);
                let look = node + 1;
                if look >= offset {
                    xs_next[slot].copy_from(state.node(look - offset));
                } else {
                    xs_next[slot].copy_from(history.value_at(offset - look));
                }
            }
            let f1 = problem.dynamics(t_next, &xs_next, u);
            state.node(node) + (dt / 2.0) * (f0 + f1)
        }
    };

    let mut clipped = 0;
    if settings.nonneg_clip {
        for c in 0..n {
            if next[c] < 0.0 {
                debug!(
                    "clipping state component {c} = {} to 0 at node {}",
                    next[c],
                    node + 1
                );
                next[c] = 0.0;
                clipped += 1;
            }
        }
    }

    if next.iter().any(|v| !v.is_finite()) {
        return Err(DdeError::NonFiniteState { node: node + 1, t: grid.node_time(node + 1) });
    }
    Ok((next, clipped))
}

/// Integrates the delayed dynamics forward over the whole grid for a
/// fixed piecewise-constant control.
pub fn integrate_forward(
    problem: &ProblemDef,
    grid: &Grid,
    control: &Trajectory,
    history: &History,
    settings: &IntegratorSettings,
) -> Result<Trajectory, DdeError> {
    check_inputs(problem, grid, control, history)?;

    let mut state = Trajectory::zeros(grid, problem.state_dim());
    state.set_node(0, history.initial_state().clone());

    let mut clips = 0;
    for node in 0..grid.num_steps() {
        let (next, clipped) =
            advance_node(problem, grid, &state, history, node, control.node(node), settings)?;
        clips += clipped;
        state.set_node(node + 1, next);
    }
    if clips > 0 {
        warn!("forward integration clipped {clips} negative state components to zero");
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderEstimate {
    /// Every refinement level matched the reference to roundoff.
    Exact,
    Order(f64),
}

/// Sup-norm errors of successively refined integrations against the
/// finest grid, and the implied convergence orders.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub estimate: OrderEstimate,
}

fn refine_control(control: &Trajectory, fine: &Grid, level: usize) -> Trajectory {
    let values =
        (0..fine.num_nodes()).map(|j| control.node(j >> level).clone()).collect();
    Trajectory::from_values(fine, values)
}

fn refine_history(history: &History, fine: &Grid, level: usize) -> History {
    match history {
        History::Constant(v) => History::Constant(v.clone()),
        History::Sampled(_) => {
            let d = fine.max_delay_steps();
            let scale = (1usize << level) as f64;
            let values = (0..=d)
                .map(|idx| {
                    let back_fine = (d - idx) as f64;
                    let back = back_fine / scale;
                    let lo = back.floor() as usize;
                    let hi = back.ceil() as usize;
                    let w = back - lo as f64;
                    history.value_at(lo) * (1.0 - w) + history.value_at(hi) * w
                })
                .collect();
            History::Sampled(values)
        }
    }
}

/// Estimates the empirical convergence order of the chosen scheme by
/// integrating on `refinements + 1` nested grids (each halving the step)
/// and comparing all coarser runs to the finest at shared nodes.
pub fn convergence_order(
    problem: &ProblemDef,
    grid: &Grid,
    control: &Trajectory,
    history: &History,
    settings: &IntegratorSettings,
    refinements: usize,
) -> Result<ConvergenceReport, DdeError> {
    check_inputs(problem, grid, control, history)?;
    if refinements < 2 {
        return Err(DdeError::Refinement(
            "need at least two refinements for an order estimate".into(),
        ));
    }

    let delays = grid.delays();
    let levels = refinements + 1;
    let mut runs = Vec::with_capacity(levels);
    for level in 0..levels {
        let fine = build_grid(
            grid.t0(),
            grid.t_final(),
            grid.num_steps() << level,
            &delays,
        )
        .map_err(|e| DdeError::Refinement(e.to_string()))?;
        let c = refine_control(control, &fine, level);
        let h = refine_history(history, &fine, level);
        runs.push(integrate_forward(problem, &fine, &c, &h, settings)?);
    }

    // Sup-norm distance between two nested runs at the coarser one's nodes.
    let distance = |coarse: &Trajectory, fine: &Trajectory, stride: usize| {
        (0..coarse.num_nodes())
            .map(|j| (coarse.node(j) - fine.node(j * stride)).amax())
            .fold(0.0f64, f64::max)
    };

    let reference = runs.last().expect("at least two levels");
    let errors: Vec<f64> = runs[..levels - 1]
        .iter()
        .enumerate()
        .map(|(level, run)| distance(run, reference, 1usize << (levels - 1 - level)))
        .collect();

    let floor = 1e-13 * reference.iter().map(|v| v.amax()).fold(1.0f64, f64::max);
    if errors.iter().all(|&e| e <= floor) {
        return Ok(ConvergenceReport { errors, orders: Vec::new(), estimate: OrderEstimate::Exact });
    }

    // Order from consecutive-pair differences: for a scheme of order p the
    // pairwise distance scales like (dt)^p with a level-independent
    // constant, so successive ratios are unbiased estimates of 2^p.
    // Ratios of the errors against the finest grid would overshoot, since
    // the reference itself sits inside the hierarchy.
    let pair_gaps: Vec<f64> = (0..levels - 1)
        .map(|level| distance(&runs[level], &runs[level + 1], 2))
        .collect();
    let orders: Vec<f64> = pair_gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let estimate = OrderEstimate::Order(orders.iter().sum::<f64>() / orders.len() as f64);
    Ok(ConvergenceReport { errors, orders, estimate })
}
