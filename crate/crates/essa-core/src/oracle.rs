//! Independent verification machinery: finite-difference derivative
//! checks, a brute-force solver for the fully discretized delay-free
//! problem, a scalar Riccati reference, and fine-grid reference
//! integrations. Everything here recomputes quantities the main solver
//! also needs, on purpose and by other means, so disagreements point at
//! bugs rather than at discretization gaps.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::control::{project, ControlSet, ProjectionError};
use crate::dde::{integrate_forward, DdeError, IntegratorSettings};
use crate::grid::{build_grid, Grid};
use crate::problem::ProblemDef;
use crate::solver::eval_total_cost;
use crate::trajectory::{History, Trajectory};

/// Default step for the central differences, balancing truncation
/// against roundoff for generic smooth callbacks.
pub const DEFAULT_FD_EPS: f64 = 1e-6;

const FD_SEED: u64 = 0x0e55a;
const BRUTE_FORCE_ITER_CAP: usize = 50_000;
const BRUTE_FORCE_BACKTRACKS: usize = 60;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("projected gradient did not reach tolerance: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("brute-force oracle supports only delay-free problems: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Forward(#[from] DdeError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Worst relative mismatch between supplied derivatives and central
/// differences, one number per derivative block.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// One entry per delay slot, slot 0 first.
    pub state_jacobian: Vec<f64>,
    pub control_jacobian: f64,
    /// One entry per delay slot, slot 0 first.
    pub state_gradient: Vec<f64>,
    pub control_gradient: f64,
}

impl FdReport {
    pub fn max_error(&self) -> f64 {
        self.blocks().into_iter().fold(0.0, |acc, (_, e)| acc.max(e))
    }

    /// Labeled block errors for report printing.
    pub fn blocks(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (slot, &e) in self.state_jacobian.iter().enumerate() {
            out.push((format!("df/dx[slot {slot}]"), e));
        }
        out.push(("df/du".to_string(), self.control_jacobian));
        for (slot, &e) in self.state_gradient.iter().enumerate() {
            out.push((format!("dl/dx[slot {slot}]"), e));
        }
        out.push(("dl/du".to_string(), self.control_gradient));
        out
    }
}

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / an.abs().max(1.0)
}

/// Compares the supplied Jacobians and gradients against central
/// differences of the dynamics and running cost at `samples` random
/// points with states and controls drawn from the unit cube.
///
/// The step for each coordinate is `eps * max(1, |value|)`. The check
/// involves no integrator, so its outcome cannot depend on scheme
/// settings. Sampling is internally seeded and deterministic.
pub fn fd_check(problem: &ProblemDef, samples: usize, eps: f64) -> FdReport {
    assert!(
        eps > 0.0 && eps <= 1e-3,
        "fd step must lie in (0, 1e-3], got {eps}"
    );
    let n = problem.state_dim();
    let m = problem.control_dim();
    let slots = problem.num_slots();
    let mut rng = ChaCha8Rng::seed_from_u64(FD_SEED);

    let mut report = FdReport {
        state_jacobian: vec![0.0; slots],
        control_jacobian: 0.0,
        state_gradient: vec![0.0; slots],
        control_gradient: 0.0,
    };

    for _ in 0..samples {
        let t: f64 = rng.gen();
        let xs: Vec<DVector<f64>> =
            (0..slots).map(|_| DVector::from_fn(n, |_, _| rng.gen())).collect();
        let u = DVector::from_fn(m, |_, _| rng.gen());

        for slot in 0..slots {
            let jac = problem.state_jacobian(t, &xs, &u, slot);
            let grad = problem.state_gradient(t, &xs, &u, slot);
            for col in 0..n {
                let base = xs[slot][col];
                let h = eps * base.abs().max(1.0);
                let mut plus = xs.clone();
                plus[slot][col] = base + h;
                let mut minus = xs.clone();
                minus[slot][col] = base - h;
                // The realized step absorbs the rounding of base +- h.
                let denom = plus[slot][col] - minus[slot][col];
                let df = (problem.dynamics(t, &plus, &u)
                    - problem.dynamics(t, &minus, &u))
                    / denom;
                for row in 0..n {
                    let e = rel_err(df[row], jac[(row, col)]);
                    report.state_jacobian[slot] = report.state_jacobian[slot].max(e);
                }
                let dl = (problem.running_cost(t, &plus, &u)
                    - problem.running_cost(t, &minus, &u))
                    / denom;
                let e = rel_err(dl, grad[col]);
                report.state_gradient[slot] = report.state_gradient[slot].max(e);
            }
        }

        let jac = problem.control_jacobian(t, &xs, &u);
        let grad = problem.control_gradient(t, &xs, &u);
        for col in 0..m {
            let base = u[col];
            let h = eps * base.abs().max(1.0);
            let mut plus = u.clone();
            plus[col] = base + h;
            let mut minus = u.clone();
            minus[col] = base - h;
            let denom = plus[col] - minus[col];
            let df =
                (problem.dynamics(t, &xs, &plus) - problem.dynamics(t, &xs, &minus)) / denom;
            for row in 0..n {
                let e = rel_err(df[row], jac[(row, col)]);
                report.control_jacobian = report.control_jacobian.max(e);
            }
            let dl = (problem.running_cost(t, &xs, &plus)
                - problem.running_cost(t, &xs, &minus))
                / denom;
            let e = rel_err(dl, grad[col]);
            report.control_gradient = report.control_gradient.max(e);
        }
    }

    report
}

/// Exact gradient of the discretized cost with respect to the control
/// nodes, by the discrete adjoint of the forward Euler recursion.
fn discrete_gradient(
    problem: &ProblemDef,
    grid: &Grid,
    state: &Trajectory,
    control: &Trajectory,
) -> Vec<DVector<f64>> {
    let n = grid.num_steps();
    let dt = grid.dt();
    let mut grad = vec![DVector::zeros(problem.control_dim()); n];
    let mut p = match problem.terminal() {
        Some(terminal) => (terminal.gradient)(state.node(n)),
        None => DVector::zeros(problem.state_dim()),
    };
    for j in (0..n).rev() {
        let t = grid.node_time(j);
        let xs = vec![state.node(j).clone()];
        let u = control.node(j);
        let b = problem.control_jacobian(t, &xs, u);
        grad[j] = dt * (problem.control_gradient(t, &xs, u) + b.transpose() * &p);
        let a = problem.state_jacobian(t, &xs, u, 0);
        p += dt * (problem.state_gradient(t, &xs, u, 0) + a.transpose() * &p);
    }
    grad
}

/// Solves the fully discretized delay-free problem by projected gradient
/// descent over all control nodes at once, with the dynamics rolled in
/// by forward substitution.
///
/// The forward pass reuses the solver's own Euler integrator, so both
/// solvers minimize the identical discrete functional and disagreements
/// isolate algorithmic bugs. Terminates when the Euclidean norm of the
/// projected-gradient map over all nodes drops to `tol`.
pub fn brute_force_lq(
    problem: &ProblemDef,
    grid: &Grid,
    history: &History,
    u_set: &ControlSet,
    tol: f64,
) -> Result<Trajectory, OracleError> {
    if problem.num_delays() != 0 {
        return Err(OracleError::Unsupported(format!(
            "problem declares {} delays",
            problem.num_delays()
        )));
    }
    let n = grid.num_steps();
    let settings = IntegratorSettings::default();

    let start = match u_set.midpoint() {
        Some(v) => v,
        None => project(u_set, &DVector::zeros(problem.control_dim()))?,
    };
    let mut control = Trajectory::constant(grid, start);
    let mut state = integrate_forward(problem, grid, &control, history, &settings)?;
    let mut cost = eval_total_cost(problem, grid, &state, &control, history);
    let mut step = 1.0;
    let mut residual = f64::INFINITY;

    for iter in 0..BRUTE_FORCE_ITER_CAP {
        let grad = discrete_gradient(problem, grid, &state, &control);
        let residual_sq: f64 = (0..n)
            .map(|j| {
                let mapped = project(u_set, &(control.node(j) - &grad[j]))?;
                Ok((control.node(j) - mapped).norm_squared())
            })
            .sum::<Result<f64, ProjectionError>>()?;
        residual = residual_sq.sqrt();
        if residual <= tol {
            let last = control.node(n - 1).clone();
            control.set_node(n, last);
            return Ok(control);
        }

        let mut accepted = false;
        for _ in 0..BRUTE_FORCE_BACKTRACKS {
            let mut trial = control.clone();
            let mut moved_sq = 0.0;
            for j in 0..n {
                let v = project(u_set, &(control.node(j) - step * &grad[j]))?;
                moved_sq += (&v - control.node(j)).norm_squared();
                trial.set_node(j, v);
            }
            let trial_state =
                integrate_forward(problem, grid, &trial, history, &settings)?;
            let trial_cost =
                eval_total_cost(problem, grid, &trial_state, &trial, history);
            if trial_cost <= cost - ARMIJO / step * moved_sq {
                control = trial;
                state = trial_state;
                cost = trial_cost;
                step = (step * 2.0).min(1e8);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(OracleError::NoConvergence { iters: iter + 1, residual });
        }
    }

    Err(OracleError::NoConvergence { iters: BRUTE_FORCE_ITER_CAP, residual })
}

/// Closed-loop reference for the scalar problem `x' = a x + b u`,
/// cost integrand `q x^2 + r u^2`, zero terminal cost, no control
/// bounds. Solves the Riccati equation `S' = S^2 b^2 / (2 r) - 2 a S - 2 q`
/// backward from `S(T) = 0` and plays back `u = -S b x / (2 r)`, both by
/// fourth-order Runge-Kutta with `substeps` stages per grid interval.
///
/// Returns the optimal state and control restricted to the grid nodes.
pub fn riccati_lq_reference(
    a: f64,
    b: f64,
    q: f64,
    r: f64,
    x0: f64,
    grid: &Grid,
    substeps: usize,
) -> (Trajectory, Trajectory) {
    assert!(substeps >= 1, "substeps must be at least 1");
    assert!(r > 0.0, "control weight must be positive");
    let n = grid.num_steps();
    // S on a half-step lattice so the forward pass has midpoint values.
    let fine = 2 * substeps * n;
    let hs = (grid.t_final() - grid.t0()) / fine as f64;
    let s_dot = |s: f64| s * s * b * b / (2.0 * r) - 2.0 * a * s - 2.0 * q;
    let mut s = vec![0.0; fine + 1];
    for k in (0..fine).rev() {
        let s1 = s[k + 1];
        let k1 = s_dot(s1);
        let k2 = s_dot(s1 - 0.5 * hs * k1);
        let k3 = s_dot(s1 - 0.5 * hs * k2);
        let k4 = s_dot(s1 - hs * k3);
        s[k] = s1 - hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    let x_dot = |s_val: f64, x: f64| (a - s_val * b * b / (2.0 * r)) * x;
    let hx = 2.0 * hs;
    let mut x = vec![0.0; substeps * n + 1];
    x[0] = x0;
    for k in 0..substeps * n {
        let (s0, s_half, s1) = (s[2 * k], s[2 * k + 1], s[2 * k + 2]);
        let k1 = x_dot(s0, x[k]);
        let k2 = x_dot(s_half, x[k] + 0.5 * hx * k1);
        let k3 = x_dot(s_half, x[k] + 0.5 * hx * k2);
        let k4 = x_dot(s1, x[k] + hx * k3);
        x[k + 1] = x[k] + hx / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    let states = (0..=n).map(|j| DVector::from_element(1, x[j * substeps])).collect();
    let controls = (0..=n)
        .map(|j| {
            let s_val = s[2 * substeps * j];
            DVector::from_element(1, -s_val * b * x[j * substeps] / (2.0 * r))
        })
        .collect();
    (
        Trajectory::from_values(grid, states),
        Trajectory::from_values(grid, controls),
    )
}

/// Integrates `problem` under `control` on a `refine` times finer grid
/// (delays stay node-aligned) and restricts the result back to the
/// coarse nodes. A sampled history is linearly interpolated onto the
/// fine pre-horizon lattice.
pub fn reference_trajectory(
    problem: &ProblemDef,
    control: &Trajectory,
    history: &History,
    refine: usize,
    settings: &IntegratorSettings,
) -> Result<Trajectory, DdeError> {
    if refine < 2 {
        return Err(DdeError::Refinement(format!(
            "refine factor must be at least 2, got {refine}"
        )));
    }
    let coarse = control.grid();
    let n = coarse.num_steps();
    let fine = build_grid(
        coarse.t0(),
        coarse.t_final(),
        n * refine,
        &coarse.delays(),
    )
    .map_err(|e| DdeError::Refinement(e.to_string()))?;

    let fine_control = Trajectory::from_values(
        &fine,
        (0..=n * refine).map(|k| control.node((k / refine).min(n)).clone()).collect(),
    );
    let fine_history = match history {
        History::Constant(v) => History::Constant(v.clone()),
        History::Sampled(_) => {
            let d = fine.max_delay_steps();
            let values = (0..=d)
                .map(|idx| {
                    let back = (d - idx) as f64 / refine as f64;
                    let lo = back.floor() as usize;
                    let hi = back.ceil() as usize;
                    let w = back - lo as f64;
                    history.value_at(lo) * (1.0 - w) + history.value_at(hi) * w
                })
                .collect();
            History::Sampled(values)
        }
    };

    let fine_state = integrate_forward(problem, &fine, &fine_control, &fine_history, settings)?;
    Ok(Trajectory::from_values(
        coarse,
        (0..=n).map(|j| fine_state.node(j * refine).clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::models::lq::{canonical_lq, canonical_lq_setup, lq_test_problem};
    use crate::models::sirv::{sirv_control_set, sirv_problem, SirvParams};
    use crate::problem::ProblemDef;
    use crate::solver::solve;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn exact_derivatives_of_the_lq_problem_pass() {
        let lq = canonical_lq();
        // Central differences are exact for quadratics, so only roundoff
        // remains and a large step keeps it far below the bound.
        let report = fd_check(&lq.problem, 100, 1e-3);
        assert!(report.max_error() <= 1e-10, "report {report:?}");
    }

    #[test]
    fn fd_check_is_deterministic() {
        let lq = canonical_lq();
        let a = fd_check(&lq.problem, 25, 1e-5);
        let b = fd_check(&lq.problem, 25, 1e-5);
        assert_eq!(a, b);
    }

    #[test]
    fn epidemic_model_derivatives_pass() {
        let problem = sirv_problem(&SirvParams::benchmark()).unwrap();
        let report = fd_check(&problem, 100, 1e-5);
        assert!(report.max_error() <= 1e-6, "report {report:?}");
    }

    #[test]
    fn corrupted_jacobian_is_flagged() {
        let problem = ProblemDef::builder(1, 1, 0)
            .dynamics(|_, xs, u| dvector![2.0 * xs[0][0] + u[0]])
            .state_jacobian(|_, _, _, _| dmatrix![2.2])
            .control_jacobian(|_, _, _| dmatrix![1.0])
            .running_cost(|_, xs, _| xs[0][0])
            .state_gradient(|_, _, _, _| dvector![1.0])
            .control_gradient(|_, _, _| dvector![0.0])
            .build()
            .unwrap();
        let report = fd_check(&problem, 20, 1e-5);
        assert!(report.state_jacobian[0] >= 1e-2, "report {report:?}");
        assert!(report.control_jacobian <= 1e-8);
        assert!(report.state_gradient[0] <= 1e-8);
    }

    #[test]
    fn zero_target_needs_no_control() {
        let lq = lq_test_problem(0.0, 1.0, 0.0, 1.0, -10.0, 10.0).unwrap();
        let grid = build_grid(0.0, 1.0, 20, &[]).unwrap();
        let history = History::Constant(dvector![0.0]);
        let control =
            brute_force_lq(&lq.problem, &grid, &history, &lq.control_set, 1e-12).unwrap();
        for j in 0..=20 {
            assert_eq!(control.node(j)[0], 0.0, "node {j}");
        }
    }

    #[test]
    fn impossible_tolerance_reports_no_convergence() {
        let lq = canonical_lq();
        let (grid, history) = canonical_lq_setup(10);
        match brute_force_lq(&lq.problem, &grid, &history, &lq.control_set, 0.0) {
            Err(OracleError::NoConvergence { iters, .. }) => assert!(iters > 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delayed_problems_are_rejected() {
        let problem = sirv_problem(&SirvParams::benchmark()).unwrap();
        let grid = build_grid(0.0, 350.0, 3500, &[5.0, 7.0]).unwrap();
        let history = History::Constant(SirvParams::benchmark_initial_state());
        let set = sirv_control_set(&SirvParams::benchmark());
        match brute_force_lq(&problem, &grid, &history, &set, 1e-6) {
            Err(OracleError::Unsupported(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projected_gradient_tracks_the_riccati_feedback() {
        let lq = canonical_lq();
        let (grid, history) = canonical_lq_setup(1000);
        let control =
            brute_force_lq(&lq.problem, &grid, &history, &lq.control_set, 1e-8).unwrap();
        let (_, reference) = riccati_lq_reference(0.0, 1.0, 1.0, 1.0, 1.0, &grid, 4);
        let gap = control.l2_sq_diff(&reference).sqrt();
        assert!(gap <= 1e-3, "gap {gap}");
    }

    #[test]
    fn both_solvers_minimize_the_same_discrete_functional() {
        let lq = canonical_lq();
        // The sweep solver's costate evaluates its backward step at the
        // far end of each interval, so its fixed point sits O(dt) from
        // the exact discrete minimizer and the J gap closes as dt^2
        // (measured 0.42 * dt^2 relative). The grid must be fine enough
        // for that gap to sit below the 1e-6 agreement bound.
        let (grid, history) = canonical_lq_setup(2000);
        let brute =
            brute_force_lq(&lq.problem, &grid, &history, &lq.control_set, 1e-8).unwrap();
        // Drive the sweep solver well past its default tolerance so the
        // comparison measures agreement of the optima, not stopping slack.
        let config = SolverConfig { eta_tol: Some(1e-12), ..SolverConfig::default() };
        let solution = solve(
            &lq.problem,
            &lq.control_set,
            &grid,
            &history,
            None,
            &IntegratorSettings::default(),
            &config,
            None,
        )
        .unwrap();
        let brute_state =
            integrate_forward(&lq.problem, &grid, &brute, &history, &IntegratorSettings::default())
                .unwrap();
        let j_brute = eval_total_cost(&lq.problem, &grid, &brute_state, &brute, &history);
        let rel = (j_brute - solution.cost).abs() / j_brute.abs().max(1e-30);
        assert!(rel <= 1e-6, "J brute {j_brute}, J solver {}", solution.cost);
        let gap = brute.l2_sq_diff(&solution.control).sqrt();
        assert!(gap <= 1e-3, "control gap {gap}");
    }

    #[test]
    fn refining_a_frozen_field_changes_nothing() {
        let problem = ProblemDef::builder(2, 1, 0)
            .dynamics(|_, _, _| dvector![0.0, 0.0])
            .state_jacobian(|_, _, _, _| nalgebra::DMatrix::zeros(2, 2))
            .control_jacobian(|_, _, _| nalgebra::DMatrix::zeros(2, 1))
            .running_cost(|_, _, _| 0.0)
            .state_gradient(|_, _, _, _| dvector![0.0, 0.0])
            .control_gradient(|_, _, _| dvector![0.0])
            .build()
            .unwrap();
        let grid = build_grid(0.0, 1.0, 10, &[]).unwrap();
        let history = History::Constant(dvector![3.0, -4.0]);
        let control = Trajectory::zeros(&grid, 1);
        let settings = IntegratorSettings::default();
        let coarse = integrate_forward(&problem, &grid, &control, &history, &settings).unwrap();
        let reference = reference_trajectory(&problem, &control, &history, 7, &settings).unwrap();
        assert_eq!(coarse, reference);
    }

    #[test]
    fn finer_references_approach_the_analytic_value() {
        // x' = -x(t - 1) from constant history 1 reaches -1/2 at t = 2.
        let problem = ProblemDef::builder(1, 1, 1)
            .dynamics(|_, xs, _| dvector![-xs[1][0]])
            .state_jacobian(|_, _, _, slot| {
                if slot == 1 { dmatrix![-1.0] } else { dmatrix![0.0] }
            })
            .control_jacobian(|_, _, _| dmatrix![0.0])
            .running_cost(|_, _, _| 0.0)
            .state_gradient(|_, _, _, _| dvector![0.0])
            .control_gradient(|_, _, _| dvector![0.0])
            .build()
            .unwrap();
        let grid = build_grid(0.0, 2.0, 20, &[1.0]).unwrap();
        let history = History::Constant(dvector![1.0]);
        let control = Trajectory::zeros(&grid, 1);
        let settings = IntegratorSettings::default();
        let mut gaps = Vec::new();
        for refine in [2, 4, 8] {
            let reference =
                reference_trajectory(&problem, &control, &history, refine, &settings).unwrap();
            gaps.push((reference.node(20)[0] + 0.5).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn epidemic_reference_stays_close_to_the_coarse_run() {
        let params = SirvParams::benchmark();
        let problem = sirv_problem(&params).unwrap();
        let grid = build_grid(0.0, 350.0, 3500, &params.delays()).unwrap();
        let history = History::Constant(SirvParams::benchmark_initial_state());
        let control = Trajectory::zeros(&grid, 2);
        let settings = IntegratorSettings::default();
        let coarse = integrate_forward(&problem, &grid, &control, &history, &settings).unwrap();
        let reference =
            reference_trajectory(&problem, &control, &history, 10, &settings).unwrap();
        let gap = coarse.sup_diff(&reference);
        // Frozen regression bound: the uncontrolled outbreak peak puts
        // the Euler error at step 0.1 near 1.06e-2, and the tenfold
        // refinement exposes almost all of it.
        assert!(gap <= 1.5e-2, "gap {gap}");
    }

    #[test]
    fn tiny_refine_factor_is_rejected() {
        let lq = canonical_lq();
        let (grid, history) = canonical_lq_setup(10);
        let control = Trajectory::zeros(&grid, 1);
        match reference_trajectory(&lq.problem, &control, &history, 1, &IntegratorSettings::default())
        {
            Err(DdeError::Refinement(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
