//! Hamiltonian evaluation and the per-node minimization of its
//! proximally augmented form.
//!
//! The augmented Hamiltonian adds a quadratic penalty anchored at the
//! previous sweep's control. For control-affine dynamics with a
//! diagonal quadratic control cost and a box control set the minimizer
//! is closed-form coordinatewise; otherwise a projected descent loop is
//! used, and the anchor value is never exceeded.

use nalgebra::DVector;

use crate::config::InnerMinSettings;
use crate::control::{project, ControlSet, ProjectionError};
use crate::problem::ProblemDef;

/// Diagonal proximal weight matrix, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RegMatrix {
    diag: DVector<f64>,
}

impl RegMatrix {
    pub fn uniform(dim: usize, value: f64) -> Self {
        assert!(value > 0.0, "proximal weight must be positive, got {value}");
        RegMatrix { diag: DVector::from_element(dim, value) }
    }

    pub fn from_diag(diag: DVector<f64>) -> Self {
        assert!(
            diag.iter().all(|&v| v > 0.0),
            "proximal weights must all be positive"
        );
        RegMatrix { diag }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Smallest diagonal entry.
    pub fn eps_min(&self) -> f64 {
        self.diag.min()
    }

    /// Multiplies every entry by `factor >= 1`.
    pub fn grow(&mut self, factor: f64) {
        assert!(factor >= 1.0, "grow factor must be at least 1, got {factor}");
        self.diag *= factor;
    }

    /// Multiplies every entry by `factor` in (0, 1], clamped below at
    /// the matching entry of `floor`.
    pub fn relax(&mut self, factor: f64, floor: &DVector<f64>) {
        assert!(factor > 0.0 && factor <= 1.0);
        for (v, f) in self.diag.iter_mut().zip(floor.iter()) {
            *v = (*v * factor).max(*f);
        }
    }

    /// Penalty value `(v - anchor)^T C (v - anchor)`.
    pub fn penalty(&self, v: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
        let d = v - anchor;
        d.iter().zip(self.diag.iter()).map(|(di, ci)| ci * di * di).sum()
    }
}

/// Hamiltonian `l(t, X, u) + lambda^T f(t, X, u)`.
pub fn eval_h(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    problem.running_cost(t, xs, u) + lambda.dot(&problem.dynamics(t, xs, u))
}

/// Augmented Hamiltonian: `eval_h` at `v` plus the proximal penalty
/// anchored at `u_prev`.
#[allow(clippy::too_many_arguments)]
pub fn eval_k(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    v: &DVector<f64>,
    lambda: &DVector<f64>,
    u_prev: &DVector<f64>,
    c: &RegMatrix,
) -> f64 {
    eval_h(problem, t, xs, v, lambda) + c.penalty(v, u_prev)
}

/// Control gradient of the Hamiltonian,
/// `dl/du + (df/du)^T lambda`, assembled from user callbacks.
pub fn grad_h_u(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> DVector<f64> {
    problem.control_gradient(t, xs, u) + problem.control_jacobian(t, xs, u).transpose() * lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    /// Coordinatewise exact minimizer.
    ClosedForm,
    /// Projected descent converged below the step tolerance.
    Converged,
    /// Step cap reached with at least one accepted descent step.
    StepLimit,
    /// No descent found; the anchor itself is returned.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub v: DVector<f64>,
    pub status: InnerStatus,
}

/// Minimizes the augmented Hamiltonian over the control set at one node.
///
/// The returned point is always feasible and its augmented value never
/// exceeds the anchor's. The closed form applies only when the dynamics
/// are control-affine, the control cost is diagonal quadratic, and the
/// set is a box; coupling in any of the three would make a clamped
/// stationary point differ from the true constrained minimizer.
#[allow(clippy::too_many_arguments)]
pub fn minimize_k(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    lambda: &DVector<f64>,
    u_prev: &DVector<f64>,
    c: &RegMatrix,
    u_set: &ControlSet,
    settings: &InnerMinSettings,
) -> Result<MinimizeOutcome, ProjectionError> {
    let m = problem.control_dim();
    debug_assert_eq!(u_prev.len(), m);
    debug_assert_eq!(c.dim(), m);

    if problem.is_control_affine() && problem.has_quadratic_control_cost() && u_set.is_box() {
        if let Some(v) = closed_form(problem, t, xs, lambda, u_prev, c, u_set) {
            return Ok(MinimizeOutcome { v, status: InnerStatus::ClosedForm });
        }
    }
    projected_descent(problem, t, xs, lambda, u_prev, c, u_set, settings)
}

/// Exact coordinatewise minimizer for the separable case:
/// `v_j = clamp((2 c_j u_prev_j - (G^T lambda + q_lin)_j) / (2 Q_jj + 2 c_j))`
/// where `q_lin` and the diagonal `Q` are recovered from the control
/// gradient at zero and at the unit directions.
fn closed_form(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    lambda: &DVector<f64>,
    u_prev: &DVector<f64>,
    c: &RegMatrix,
    u_set: &ControlSet,
) -> Option<DVector<f64>> {
    let m = problem.control_dim();
    let (lo, hi) = match u_set {
        ControlSet::Box { lo, hi } => (lo, hi),
        _ => return None,
    };

    let zero = DVector::zeros(m);
    let q_lin = problem.control_gradient(t, xs, &zero);
    let g_lambda = problem.control_jacobian(t, xs, u_prev).transpose() * lambda;

    let mut v = DVector::zeros(m);
    for j in 0..m {
        let mut e = DVector::zeros(m);
        e[j] = 1.0;
        let q_jj = (problem.control_gradient(t, xs, &e)[j] - q_lin[j]) / 2.0;
        if q_jj < -1e-12 {
            // The quadratic-control-cost promise is broken; let the
            // numeric path handle it.
            return None;
        }
        let cj = c.diag()[j];
        let num = 2.0 * cj * u_prev[j] - g_lambda[j] - q_lin[j];
        let den = 2.0 * q_jj.max(0.0) + 2.0 * cj;
        v[j] = (num / den).clamp(lo[j], hi[j]);
    }
    Some(v)
}

/// Projected descent on the augmented Hamiltonian, starting from the
/// anchor. Uses the exact control Hessian when the problem supplies one,
/// else a gradient step with an adaptively scaled step size. Armijo
/// backtracking guarantees monotone descent; if no step is accepted the
/// anchor is returned unchanged.
#[allow(clippy::too_many_arguments)]
fn projected_descent(
    problem: &ProblemDef,
    t: f64,
    xs: &[DVector<f64>],
    lambda: &DVector<f64>,
    u_prev: &DVector<f64>,
    c: &RegMatrix,
    u_set: &ControlSet,
    settings: &InnerMinSettings,
) -> Result<MinimizeOutcome, ProjectionError> {
    const ARMIJO: f64 = 1e-4;
    const BACKTRACKS: usize = 25;

    let mut v = project(u_set, u_prev)?;
    let mut k_v = eval_k(problem, t, xs, &v, lambda, u_prev, c);
    let mut improved = false;

    for _ in 0..settings.max_steps {
        let g = {
            let mut g = grad_h_u(problem, t, xs, &v, lambda);
            for j in 0..g.len() {
                g[j] += 2.0 * c.diag()[j] * (v[j] - u_prev[j]);
            }
            g
        };

        // Newton-like direction when the exact Hessian is available and
        // positive definite after adding the proximal term.
        let direction = problem
            .control_hessian(t, xs, &v, lambda)
            .and_then(|mut h| {
                for j in 0..h.nrows() {
                    h[(j, j)] += 2.0 * c.diag()[j];
                }
                h.cholesky().map(|ch| ch.solve(&g))
            })
            .unwrap_or_else(|| {
                // Fall back to a gradient step scaled by the proximal
                // curvature, a safe lower bound on the true curvature
                // whenever the Hamiltonian is convex in the control.
                let scale = 2.0 * c.eps_min().max(1e-12);
                &g / scale
            });

        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..BACKTRACKS {
            let trial = project(u_set, &(&v - alpha * &direction))?;
            let step = &trial - &v;
            if step.amax() == 0.0 {
                break;
            }
            let k_trial = eval_k(problem, t, xs, &trial, lambda, u_prev, c);
            if k_trial <= k_v + ARMIJO * g.dot(&step) {
                let small = step.amax() <= settings.step_tol;
                v = trial;
                k_v = k_trial;
                accepted = true;
                improved = true;
                if small {
                    return Ok(MinimizeOutcome { v, status: InnerStatus::Converged });
                }
                break;
            }
            alpha /= 2.0;
        }

        if !accepted {
            // Either stationary (projected gradient step is null) or the
            // line search failed; both leave the current descent point.
            let status = if improved {
                InnerStatus::Converged
            } else {
                InnerStatus::Stalled
            };
            return Ok(MinimizeOutcome { v, status });
        }
    }

    let status = if improved { InnerStatus::StepLimit } else { InnerStatus::Stalled };
    Ok(MinimizeOutcome { v, status })
}
