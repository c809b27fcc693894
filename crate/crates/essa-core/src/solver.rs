//! The outer iteration: costate sweep, per-node minimization of the
//! augmented Hamiltonian with interleaved state advance, adaptive growth
//! of the proximal weights, and tolerance-based termination.
//!
//! Each iteration holds the costate fixed, rebuilds the control and the
//! state in one left-to-right sweep, and accepts the sweep only if the
//! cost strictly decreased; otherwise the proximal weights grow and the
//! sweep repeats from the same costate. Under the explicit scheme the
//! state at a node does not depend on that node's control, so the
//! per-node minimizations plus immediate advances solve the coupled
//! minimization system exactly on the grid.

use log::{debug, info, warn};
use nalgebra::DVector;
use thiserror::Error;

use crate::adjoint::{integrate_costate, AdjointError};
use crate::config::SolverConfig;
use crate::control::{project, ControlSet, ProjectionError};
use crate::dde::{advance_node, gather_tuple, integrate_forward, DdeError, IntegratorSettings};
use crate::grid::Grid;
use crate::hamiltonian::{grad_h_u, minimize_k, InnerStatus, RegMatrix};
use crate::problem::{ProblemDef, ScalarFn};
use crate::trajectory::{History, Trajectory};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Forward(#[from] DdeError),
    #[error(transparent)]
    Costate(#[from] AdjointError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("terminal cost supplied without a Hessian callback")]
    MissingHessian,
    #[error("no initial control given and the control set has no midpoint")]
    MissingStart,
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("cost became non-finite at iteration {iter}")]
    NonFiniteCost { iter: usize },
    #[error(
        "optimality residual {residual} exceeds {tol} at termination (strict residual mode)"
    )]
    ResidualAboveTolerance { residual: f64, tol: f64 },
    #[error("returned state fails re-integration closure (sup diff {sup})")]
    ClosureCheck { sup: f64 },
}

/// One Step-2 attempt: a full sweep at the current proximal weights.
/// Rejected attempts (no cost decrease) appear with `accepted: false`
/// and the same index as their retries.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub cost: f64,
    /// Squared L2 distance between this sweep's control and the previous
    /// accepted control.
    pub delta_u_sq: f64,
    /// Smallest proximal diagonal entry used by this sweep.
    pub eps_min: f64,
    /// Weight increases burned within the current outer iteration before
    /// this sweep.
    pub c_increases: usize,
    pub accepted: bool,
    /// First-order optimality residual; filled on the final record.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Control change dropped below the tolerance.
    ToleranceMet,
    /// Outer iteration cap reached; best accepted control returned.
    MaxIters,
    /// Proximal weight increases hit the per-iteration cap without
    /// producing descent; best accepted control returned.
    CIncreaseCap,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub control: Trajectory,
    pub state: Trajectory,
    pub costate: Trajectory,
    pub log: Vec<IterationRecord>,
    pub termination: Termination,
    /// Cost of the returned control, including any terminal cost.
    pub cost: f64,
    /// First-order optimality residual of the returned control.
    pub residual: f64,
}

/// Folds a terminal cost into the running cost along the dynamics:
/// `l1 = l + grad_gamma(x0) . f`, which shifts the cost by the constant
/// `gamma(x(t0)) - gamma(x(T))` up to quadrature error. Derivatives come
/// from the product rule; the current-state slot needs the terminal
/// Hessian. Problems without a terminal cost pass through unchanged.
///
/// The quadratic-control-cost marker survives only for control-affine
/// dynamics, where the new term is linear in the control.
pub fn absorb_terminal_cost(problem: &ProblemDef) -> Result<ProblemDef, SolveError> {
    let terminal = match problem.terminal() {
        None => return Ok(problem.clone()),
        Some(t) => t.clone(),
    };
    let hessian = terminal.hessian.clone().ok_or(SolveError::MissingHessian)?;
    let gradient = terminal.gradient.clone();

    let running_cost: ScalarFn = {
        let ell = problem.running_cost_fn();
        let f = problem.dynamics_fn();
        let gradient = gradient.clone();
        std::sync::Arc::new(move |t, xs, u| {
            ell(t, xs, u) + gradient(&xs[0]).dot(&f(t, xs, u))
        })
    };

    let state_gradient = {
        let dl = problem.state_gradient_fn();
        let df = problem.state_jacobian_fn();
        let f = problem.dynamics_fn();
        let gradient = gradient.clone();
        let hessian = hessian.clone();
        std::sync::Arc::new(
            move |t: f64, xs: &[DVector<f64>], u: &DVector<f64>, slot: usize| {
                let g = gradient(&xs[0]);
                let mut out = dl(t, xs, u, slot) + df(t, xs, u, slot).transpose() * &g;
                if slot == 0 {
                    out += hessian(&xs[0]) * f(t, xs, u);
                }
                out
            },
        )
    };

    let control_gradient = {
        let dl = problem.control_gradient_fn();
        let df = problem.control_jacobian_fn();
        let gradient = gradient.clone();
        std::sync::Arc::new(move |t: f64, xs: &[DVector<f64>], u: &DVector<f64>| {
            dl(t, xs, u) + df(t, xs, u).transpose() * gradient(&xs[0])
        })
    };

    // The absorbed Hamiltonian equals the original one with the costate
    // shifted by the terminal gradient, so an exact control Hessian
    // carries over under that shift.
    let control_hessian = problem.control_hessian_fn().map(|h| {
        let gradient = gradient.clone();
        std::sync::Arc::new(
            move |t: f64,
                  xs: &[DVector<f64>],
                  u: &DVector<f64>,
                  lam: &DVector<f64>| { h(t, xs, u, &(lam + gradient(&xs[0]))) },
        ) as crate::problem::ControlHessianFn
    });

    let quadratic = problem.has_quadratic_control_cost() && problem.is_control_affine();
    Ok(problem.with_replaced_cost(
        running_cost,
        state_gradient,
        control_gradient,
        control_hessian,
        quadratic,
    ))
}

/// Running cost integral by the left-endpoint rectangle rule,
/// `dt * sum over j < N of l(t_j, X(t_j), u(t_j))`. The final node's
/// control is never read.
pub fn eval_cost(
    problem: &ProblemDef,
    grid: &Grid,
    state: &Trajectory,
    control: &Trajectory,
    history: &History,
) -> f64 {
    let mut xs = vec![DVector::zeros(problem.state_dim()); grid.num_delays() + 1];
    let mut acc = 0.0;
    for j in 0..grid.num_steps() {
        gather_tuple(grid, state, history, j, &mut xs);
        acc += problem.running_cost(grid.node_time(j), &xs, control.node(j));
    }
    grid.dt() * acc
}

/// `eval_cost` plus the terminal cost at the final state, when present.
pub fn eval_total_cost(
    problem: &ProblemDef,
    grid: &Grid,
    state: &Trajectory,
    control: &Trajectory,
    history: &History,
) -> f64 {
    let mut total = eval_cost(problem, grid, state, control, history);
    if let Some(terminal) = problem.terminal() {
        total += (terminal.value)(state.node(grid.num_steps()));
    }
    total
}

/// L2 norm (rectangle quadrature) of the projected-gradient map
/// `u - P_U(u - H_u)` along the trajectory. Zero at exact stationarity;
/// the outer iteration drives it toward zero as the control settles.
///
/// A terminal cost must already be absorbed into `problem`.
pub fn optimality_residual(
    problem: &ProblemDef,
    grid: &Grid,
    control: &Trajectory,
    state: &Trajectory,
    costate: &Trajectory,
    u_set: &ControlSet,
    history: &History,
) -> Result<f64, ProjectionError> {
    let mut xs = vec![DVector::zeros(problem.state_dim()); grid.num_delays() + 1];
    let mut acc = 0.0;
    for j in 0..grid.num_steps() {
        gather_tuple(grid, state, history, j, &mut xs);
        let u = control.node(j);
        let g = grad_h_u(problem, grid.node_time(j), &xs, u, costate.node(j));
        let mapped = project(u_set, &(u - g))?;
        acc += (u - mapped).norm_squared();
    }
    Ok((grid.dt() * acc).sqrt())
}

/// Worst-case accepted-iteration count before the control change must
/// fall below `eta_tol`, given a cost gap and the smallest proximal
/// weight: `floor((j0 - j_star) / (xi0 * eta_tol))`.
pub fn termination_bound(j0: f64, j_star: f64, xi0: f64, eta_tol: f64) -> u64 {
    let b = ((j0 - j_star) / (xi0 * eta_tol)).floor();
    if !(b > 0.0) {
        0
    } else if b >= u64::MAX as f64 {
        u64::MAX
    } else {
        b as u64
    }
}

struct SweepOutput {
    control: Trajectory,
    state: Trajectory,
    stalls: usize,
    clips: usize,
    /// First node whose state advance left the finite range, if any.
    /// Such an attempt carries an effectively infinite cost.
    diverged_at: Option<usize>,
}

/// One Step-2 pass: march the nodes in order, minimizing the augmented
/// Hamiltonian at each node against the partially rebuilt state, then
/// advancing the state one step with the freshly chosen control.
#[allow(clippy::too_many_arguments)]
fn sweep(
    problem: &ProblemDef,
    grid: &Grid,
    history: &History,
    u_prev: &Trajectory,
    lambda: &Trajectory,
    c: &RegMatrix,
    u_set: &ControlSet,
    integrator: &IntegratorSettings,
    config: &SolverConfig,
) -> Result<SweepOutput, SolveError> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let last = grid.num_steps();

    let mut control = Trajectory::zeros(grid, m);
    let mut state = Trajectory::zeros(grid, n);
    state.set_node(0, history.initial_state().clone());
    let mut xs = vec![DVector::zeros(n); grid.num_delays() + 1];
    let mut stalls = 0;
    let mut clips = 0;

    let mut diverged_at = None;
    for j in 0..last {
        gather_tuple(grid, &state, history, j, &mut xs);
        let out = minimize_k(
            problem,
            grid.node_time(j),
            &xs,
            lambda.node(j),
            u_prev.node(j),
            c,
            u_set,
            &config.inner,
        )?;
        if out.status == InnerStatus::Stalled {
            stalls += 1;
        }
        match advance_node(problem, grid, &state, history, j, &out.v, integrator) {
            Ok((next, clipped)) => {
                clips += clipped;
                control.set_node(j, out.v);
                state.set_node(j + 1, next);
            }
            Err(DdeError::NonFiniteState { node, .. }) => {
                // A blown-up attempt is a rejectable candidate, not a
                // hard failure: the caller scores it as infinite cost
                // and the weight growth damps the next try. Unwritten
                // controls keep the previous iterate's values.
                for k in j..last {
                    control.set_node(k, u_prev.node(k).clone());
                }
                diverged_at = Some(node);
                break;
            }
            Err(other) => return Err(SolveError::Forward(other)),
        }
    }
    // The terminal node's control is a bookkeeping copy of the last
    // interval's value; no quadrature ever reads it.
    control.set_node(last, control.node(last - 1).clone());
    Ok(SweepOutput { control, state, stalls, clips, diverged_at })
}

/// Runs the full iteration from a nominal control.
///
/// `u0` defaults to the constant box-midpoint control when omitted.
/// Every sweep's record goes to `sink` as it happens; the final record
/// carries the optimality residual of the returned control.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    problem: &ProblemDef,
    u_set: &ControlSet,
    grid: &Grid,
    history: &History,
    u0: Option<&Trajectory>,
    integrator: &IntegratorSettings,
    config: &SolverConfig,
    mut sink: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<Solution, SolveError> {
    config.validate().map_err(SolveError::Config)?;
    let work = absorb_terminal_cost(problem)?;
    let m = problem.control_dim();
    let eta_tol = config.resolved_eta_tol(grid.t_final() - grid.t0(), m);

    // Reported costs include the terminal part, carried as the constant
    // gamma(phi(0)) on top of the absorbed running cost; constants shift
    // every comparison equally.
    let gamma0 = problem
        .terminal()
        .map(|t| (t.value)(history.initial_state()))
        .unwrap_or(0.0);

    let mut u_curr = match u0 {
        Some(traj) => {
            let mut projected = Trajectory::zeros(grid, m);
            for j in 0..traj.num_nodes() {
                projected.set_node(j, project(u_set, traj.node(j))?);
            }
            projected
        }
        None => {
            let mid = u_set.midpoint().ok_or(SolveError::MissingStart)?;
            Trajectory::constant(grid, mid)
        }
    };
    u_curr.set_node(grid.num_steps(), u_curr.node(grid.num_steps() - 1).clone());

    let mut x_curr = integrate_forward(&work, grid, &u_curr, history, integrator)?;
    let mut j_curr = eval_cost(&work, grid, &x_curr, &u_curr, history) + gamma0;
    if !j_curr.is_finite() {
        return Err(SolveError::NonFiniteCost { iter: 0 });
    }
    info!("initial cost {j_curr:.6e}, eta_tol {eta_tol:.3e}");
    if config.xi0.is_some() || config.j_lower_bound.is_some() {
        let xi0 = config.xi0.unwrap_or_else(|| config.c0_diag.min_entry());
        let j_star = config.j_lower_bound.unwrap_or(0.0);
        info!(
            "worst-case accepted-iteration bound: {}",
            termination_bound(j_curr, j_star, xi0, eta_tol)
        );
    }

    let c0 = config.c0_diag.resolve(m).map_err(SolveError::Config)?;
    let mut c = RegMatrix::from_diag(c0.clone());
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut termination = None;

    'outer: for index in 1..=config.max_outer_iters {
        // Step 1: costate from the last accepted pair; it stays fixed
        // across every retry of this iteration.
        let lambda = integrate_costate(&work, grid, &x_curr, &u_curr, history)?;
        let mut c_increases = 0;

        loop {
            let eps_min = c.eps_min();
            let attempt =
                sweep(&work, grid, history, &u_curr, &lambda, &c, u_set, integrator, config)?;
            if attempt.stalls > 0 {
                warn!(
                    "iteration {index}: inner minimizer stalled at {} of {} nodes",
                    attempt.stalls,
                    grid.num_steps()
                );
            }
            if attempt.clips > 0 {
                debug!(
                    "iteration {index}: sweep clipped {} negative state components",
                    attempt.clips
                );
            }
            let delta_u_sq = attempt.control.l2_sq_diff(&u_curr);
            let j_new = match attempt.diverged_at {
                Some(node) => {
                    warn!(
                        "iteration {index}: attempt diverged at node {node}, \
                         scoring it as infinite cost"
                    );
                    f64::INFINITY
                }
                None => {
                    let j = eval_cost(&work, grid, &attempt.state, &attempt.control, history)
                        + gamma0;
                    if j.is_finite() { j } else { f64::INFINITY }
                }
            };

            let tolerance_met = delta_u_sq <= eta_tol && j_new.is_finite();
            let descended = j_new < j_curr;
            let capped = !descended && !tolerance_met
                && c_increases >= config.max_c_increases_per_iter;
            let last_outer = descended && index == config.max_outer_iters;

            let mut record = IterationRecord {
                index,
                cost: j_new,
                delta_u_sq,
                eps_min,
                c_increases,
                accepted: descended,
                residual: None,
            };

            if tolerance_met || capped || last_outer {
                // Terminating sweep. The returned control is this
                // attempt's when the tolerance fired (the update is
                // already negligible), else the last accepted one.
                if tolerance_met || descended {
                    u_curr = attempt.control;
                    x_curr = attempt.state;
                    j_curr = j_new;
                }
                termination = Some(if tolerance_met {
                    Termination::ToleranceMet
                } else if capped {
                    Termination::CIncreaseCap
                } else {
                    Termination::MaxIters
                });
                log.push(record);
                break 'outer;
            }

            if descended {
                debug!(
                    "iteration {index}: cost {j_new:.6e}, delta_u_sq {delta_u_sq:.3e}, \
                     eps_min {eps_min:.3e}"
                );
                u_curr = attempt.control;
                x_curr = attempt.state;
                j_curr = j_new;
                if config.c_relax < 1.0 {
                    c.relax(config.c_relax, &c0);
                }
                if let Some(s) = sink.as_deref_mut() {
                    s(&record);
                }
                log.push(record);
                break;
            }

            // No decrease: grow the weights and redo the sweep against
            // the same costate.
            debug!(
                "iteration {index}: rejected sweep (cost {j_new:.6e} >= {j_curr:.6e}), \
                 growing weights past {eps_min:.3e}"
            );
            record.accepted = false;
            if let Some(s) = sink.as_deref_mut() {
                s(&record);
            }
            log.push(record);
            c.grow(config.c_growth);
            c_increases += 1;
        }
    }

    let termination = termination.unwrap_or(Termination::MaxIters);

    // Final costate, residual, and the closure re-check of the returned
    // trajectory.
    let costate = integrate_costate(&work, grid, &x_curr, &u_curr, history)?;
    let residual =
        optimality_residual(&work, grid, &u_curr, &x_curr, &costate, u_set, history)?;
    if let Some(last) = log.last_mut() {
        last.residual = Some(residual);
        if let Some(s) = sink.as_deref_mut() {
            s(last);
        }
    }

    let reintegrated = integrate_forward(&work, grid, &u_curr, history, integrator)?;
    let sup = reintegrated.sup_diff(&x_curr);
    if sup > 1e-12 {
        return Err(SolveError::ClosureCheck { sup });
    }

    if residual > config.residual_tol {
        if config.strict_residual && termination == Termination::ToleranceMet {
            return Err(SolveError::ResidualAboveTolerance {
                residual,
                tol: config.residual_tol,
            });
        }
        warn!(
            "optimality residual {residual:.3e} above tolerance {:.3e} at termination",
            config.residual_tol
        );
    }
    info!(
        "terminated: {termination:?} after {} sweeps, cost {j_curr:.6e}, residual {residual:.3e}",
        log.len()
    );

    Ok(Solution {
        control: u_curr,
        state: x_curr,
        costate,
        log,
        termination,
        cost: j_curr,
        residual,
    })
}
