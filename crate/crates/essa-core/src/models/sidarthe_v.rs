//! Delayed extended SIDARTHE-V structure.
//!
//! Nine compartments: susceptible S; infected classes I (undetected
//! asymptomatic), D (detected asymptomatic), A (undetected symptomatic),
//! R (detected symptomatic), T (critical); recovered H; deceased E;
//! vaccinated V. New infections arise from contacts of the
//! susceptible-like compartments S, H (imperfect natural immunity) and
//! V (imperfect vaccine immunity) with the infectious classes
//! {I, D, A, R}; every such contact reads the infectious compartment at
//! `t - h1`, and the vaccination inflow moves susceptibles read at
//! `t - h2`. The vaccination rate `u` is the only control.
//!
//! Rate coefficients are always loaded from configuration; the shipped
//! example file is labeled illustrative.

use nalgebra::{dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::control::ControlSet;
use crate::problem::ProblemDef;

/// Indices of the weighted compartments `[I, D, A, R, T]` in the state.
const TRACKED: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidartheVParams {
    /// Transmission rates from contacts with I, D, A, R.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// I outflows: detection, symptom onset, healing.
    pub epsilon: f64,
    pub zeta: f64,
    pub lambda: f64,
    /// D outflows: symptom onset, healing.
    pub eta: f64,
    pub rho: f64,
    /// A outflows: detection, worsening, healing.
    pub theta: f64,
    pub mu: f64,
    pub kappa: f64,
    /// R outflows: worsening, healing.
    pub nu: f64,
    pub xi: f64,
    /// T outflows: healing, death.
    pub sigma: f64,
    pub tau: f64,
    /// Contact susceptibility of the recovered relative to S.
    pub theta_h: f64,
    /// Contact susceptibility of the vaccinated relative to S.
    pub theta_v: f64,
    /// Incubation delay in days.
    pub h1: f64,
    /// Vaccine build-up delay in days.
    pub h2: f64,
    pub u_max: f64,
    pub w_i: f64,
    pub w_d: f64,
    pub w_a: f64,
    pub w_r: f64,
    pub w_t: f64,
    pub w_u: f64,
    /// Coefficients of the terminal costs `y^2 / 2` for [I, D, A, R, T].
    #[serde(default = "default_terminal_weights")]
    pub terminal_weights: [f64; 5],
}

fn default_terminal_weights() -> [f64; 5] {
    [1.0; 5]
}

const REQUIRED: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "lambda", "eta", "rho",
    "theta", "mu", "kappa", "nu", "xi", "sigma", "tau", "theta_h", "theta_v", "h1",
    "h2", "u_max", "w_i", "w_d", "w_a", "w_r", "w_t", "w_u",
];

impl SidartheVParams {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        let rates = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("zeta", self.zeta),
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("rho", self.rho),
            ("theta", self.theta),
            ("mu", self.mu),
            ("kappa", self.kappa),
            ("nu", self.nu),
            ("xi", self.xi),
            ("sigma", self.sigma),
            ("tau", self.tau),
            ("theta_h", self.theta_h),
            ("theta_v", self.theta_v),
            ("u_max", self.u_max),
            ("w_i", self.w_i),
            ("w_d", self.w_d),
            ("w_a", self.w_a),
            ("w_r", self.w_r),
            ("w_t", self.w_t),
            ("w_u", self.w_u),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) {
                bad.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        for (name, v) in [("h1", self.h1), ("h2", self.h2)] {
            if !(v > 0.0) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.terminal_weights.iter().any(|&w| !(w >= 0.0)) {
            bad.push("terminal_weights must be nonnegative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }

    pub fn delays(&self) -> Vec<f64> {
        vec![self.h1, self.h2]
    }

    /// Loads the full coefficient set from a JSON object, reporting all
    /// missing keys at once.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, ModelError> {
        let map = super::extract_coefficients(value, REQUIRED, &["terminal_weights"])?;
        let terminal_weights = match value.get("terminal_weights") {
            None => default_terminal_weights(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|_| {
                ModelError::InvalidParams(
                    "terminal_weights must be an array of 5 numbers".into(),
                )
            })?,
        };
        let get = |k: &str| map[k];
        let params = SidartheVParams {
            alpha: get("alpha"),
            beta: get("beta"),
            gamma: get("gamma"),
            delta: get("delta"),
            epsilon: get("epsilon"),
            zeta: get("zeta"),
            lambda: get("lambda"),
            eta: get("eta"),
            rho: get("rho"),
            theta: get("theta"),
            mu: get("mu"),
            kappa: get("kappa"),
            nu: get("nu"),
            xi: get("xi"),
            sigma: get("sigma"),
            tau: get("tau"),
            theta_h: get("theta_h"),
            theta_v: get("theta_v"),
            h1: get("h1"),
            h2: get("h2"),
            u_max: get("u_max"),
            w_i: get("w_i"),
            w_d: get("w_d"),
            w_a: get("w_a"),
            w_r: get("w_r"),
            w_t: get("w_t"),
            w_u: get("w_u"),
            terminal_weights,
        };
        params.validate().map_err(ModelError::InvalidParams)?;
        Ok(params)
    }
}

/// Box `[0, u_max]` for the vaccination rate.
pub fn sidarthe_v_control_set(params: &SidartheVParams) -> ControlSet {
    ControlSet::boxed(dvector![0.0], dvector![params.u_max])
}

/// Force of infection from the delayed infectious compartments.
fn foi(p: &SidartheVParams, d1: &DVector<f64>) -> f64 {
    p.alpha * d1[1] + p.beta * d1[2] + p.gamma * d1[3] + p.delta * d1[4]
}

pub fn sidarthe_v_problem(params: &SidartheVParams) -> Result<ProblemDef, ModelError> {
    params.validate().map_err(ModelError::InvalidParams)?;
    let p = *params;

    let builder = ProblemDef::builder(9, 1, 2)
        .dynamics(move |_, xs, ctl| {
            let x = &xs[0];
            let (s, i, d, a, r, t, h, v) =
                (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[8]);
            let c = foi(&p, &xs[1]);
            let sh2 = xs[2][0];
            let u = ctl[0];
            dvector![
                -s * c - u * sh2,
                (s + p.theta_h * h + p.theta_v * v) * c - (p.epsilon + p.zeta + p.lambda) * i,
                p.epsilon * i - (p.eta + p.rho) * d,
                p.zeta * i - (p.theta + p.mu + p.kappa) * a,
                p.eta * d + p.theta * a - (p.nu + p.xi) * r,
                p.mu * a + p.nu * r - (p.sigma + p.tau) * t,
                p.lambda * i + p.rho * d + p.kappa * a + p.xi * r + p.sigma * t
                    - p.theta_h * h * c,
                p.tau * t,
                u * sh2 - p.theta_v * v * c
            ]
        })
        .state_jacobian(move |_, xs, ctl, slot| {
            let x = &xs[0];
            let (s, h, v) = (x[0], x[6], x[8]);
            let c = foi(&p, &xs[1]);
            let u = ctl[0];
            let mut jac = DMatrix::zeros(9, 9);
            match slot {
                0 => {
                    jac[(0, 0)] = -c;
                    jac[(1, 0)] = c;
                    jac[(1, 1)] = -(p.epsilon + p.zeta + p.lambda);
                    jac[(1, 6)] = p.theta_h * c;
                    jac[(1, 8)] = p.theta_v * c;
                    jac[(2, 1)] = p.epsilon;
                    jac[(2, 2)] = -(p.eta + p.rho);
                    jac[(3, 1)] = p.zeta;
                    jac[(3, 3)] = -(p.theta + p.mu + p.kappa);
                    jac[(4, 2)] = p.eta;
                    jac[(4, 3)] = p.theta;
                    jac[(4, 4)] = -(p.nu + p.xi);
                    jac[(5, 3)] = p.mu;
                    jac[(5, 4)] = p.nu;
                    jac[(5, 5)] = -(p.sigma + p.tau);
                    jac[(6, 1)] = p.lambda;
                    jac[(6, 2)] = p.rho;
                    jac[(6, 3)] = p.kappa;
                    jac[(6, 4)] = p.xi;
                    jac[(6, 5)] = p.sigma;
                    jac[(6, 6)] = -p.theta_h * c;
                    jac[(7, 5)] = p.tau;
                    jac[(8, 8)] = -p.theta_v * c;
                }
                1 => {
                    // Contagion terms differentiate through the force of
                    // infection only.
                    let rates = [p.alpha, p.beta, p.gamma, p.delta];
                    for (col, rate) in TRACKED[..4].iter().zip(rates) {
                        jac[(0, *col)] = -s * rate;
                        jac[(1, *col)] =
                            (s + p.theta_h * h + p.theta_v * v) * rate;
                        jac[(6, *col)] = -p.theta_h * h * rate;
                        jac[(8, *col)] = -p.theta_v * v * rate;
                    }
                }
                2 => {
                    jac[(0, 0)] = -u;
                    jac[(8, 0)] = u;
                }
                _ => unreachable!("slot out of range"),
            }
            jac
        })
        .control_jacobian(move |_, xs, _| {
            let sh2 = xs[2][0];
            let mut jac = DMatrix::zeros(9, 1);
            jac[(0, 0)] = -sh2;
            jac[(8, 0)] = sh2;
            jac
        })
        .running_cost(move |_, xs, ctl| {
            let x = &xs[0];
            p.w_i * x[1] + p.w_d * x[2] + p.w_a * x[3] + p.w_r * x[4] + p.w_t * x[5]
                + p.w_u * ctl[0] * ctl[0]
        })
        .state_gradient(move |_, _, _, slot| {
            let mut g = DVector::zeros(9);
            if slot == 0 {
                g[1] = p.w_i;
                g[2] = p.w_d;
                g[3] = p.w_a;
                g[4] = p.w_r;
                g[5] = p.w_t;
            }
            g
        })
        .control_gradient(move |_, _, ctl| dvector![2.0 * p.w_u * ctl[0]])
        .control_hessian(move |_, _, _, _| DMatrix::from_element(1, 1, 2.0 * p.w_u))
        .terminal_cost(
            move |x| {
                TRACKED
                    .iter()
                    .zip(p.terminal_weights)
                    .map(|(&idx, w)| w * x[idx] * x[idx] / 2.0)
                    .sum()
            },
            move |x| {
                let mut g = DVector::zeros(9);
                for (&idx, w) in TRACKED.iter().zip(p.terminal_weights) {
                    g[idx] = w * x[idx];
                }
                g
            },
        )
        .terminal_hessian(move |_| {
            let mut h = DMatrix::zeros(9, 9);
            for (&idx, w) in TRACKED.iter().zip(p.terminal_weights) {
                h[(idx, idx)] = w;
            }
            h
        })
        .control_affine(true)
        .quadratic_control_cost(true)
        .state_names(["S", "I", "D", "A", "R", "T", "H", "E", "V"])
        .control_names(["u"]);

    Ok(builder.build().expect("all callbacks supplied"))
}
