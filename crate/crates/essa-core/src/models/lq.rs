//! Delay-free scalar linear-quadratic test problem.
//!
//! Dynamics `x' = a x + b u` with running cost `q x^2 + r u^2` on a box
//! of admissible controls. No delays, no terminal cost; the problem is
//! small enough that independent reference solvers stay cheap, which is
//! what the cross-checking tests lean on.

use nalgebra::{dmatrix, dvector};

use super::ModelError;
use crate::control::ControlSet;
use crate::grid::{build_grid, Grid};
use crate::problem::ProblemDef;
use crate::trajectory::History;

pub struct LqProblem {
    pub problem: ProblemDef,
    pub control_set: ControlSet,
}

pub fn lq_test_problem(
    a: f64,
    b: f64,
    q: f64,
    r: f64,
    u_lo: f64,
    u_hi: f64,
) -> Result<LqProblem, ModelError> {
    let mut bad = Vec::new();
    if !(q >= 0.0) {
        bad.push(format!("state weight q must be nonnegative, got {q}"));
    }
    if !(r > 0.0) {
        bad.push(format!("control weight r must be positive, got {r}"));
    }
    if !(u_lo < u_hi) {
        bad.push(format!("control bounds must satisfy u_lo < u_hi, got [{u_lo}, {u_hi}]"));
    }
    if !bad.is_empty() {
        return Err(ModelError::InvalidParams(bad.join("; ")));
    }

    let problem = ProblemDef::builder(1, 1, 0)
        .dynamics(move |_, xs, u| dvector![a * xs[0][0] + b * u[0]])
        .state_jacobian(move |_, _, _, slot| {
            debug_assert_eq!(slot, 0);
            dmatrix![a]
        })
        .control_jacobian(move |_, _, _| dmatrix![b])
        .running_cost(move |_, xs, u| {
            let x = xs[0][0];
            q * x * x + r * u[0] * u[0]
        })
        .state_gradient(move |_, xs, _, slot| {
            debug_assert_eq!(slot, 0);
            dvector![2.0 * q * xs[0][0]]
        })
        .control_gradient(move |_, _, u| dvector![2.0 * r * u[0]])
        .control_hessian(move |_, _, _, _| dmatrix![2.0 * r])
        .control_affine(true)
        .quadratic_control_cost(true)
        .state_names(["x"])
        .control_names(["u"])
        .build()
        .expect("all callbacks supplied");

    Ok(LqProblem {
        problem,
        control_set: ControlSet::boxed(dvector![u_lo], dvector![u_hi]),
    })
}

/// The instance used across the test suite: integrator dynamics
/// `x' = u`, cost `x^2 + u^2`, horizon 1, `x(0) = 1`, wide control box.
pub fn canonical_lq() -> LqProblem {
    lq_test_problem(0.0, 1.0, 1.0, 1.0, -10.0, 10.0).expect("valid parameters")
}

/// Grid and constant history matching [`canonical_lq`].
pub fn canonical_lq_setup(num_steps: usize) -> (Grid, History) {
    let grid = build_grid(0.0, 1.0, num_steps, &[]).expect("no delays to align");
    (grid, History::Constant(dvector![1.0]))
}
