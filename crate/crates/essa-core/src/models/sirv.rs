//! Delayed SIRV model: susceptible, infected, recovered, vaccinated,
//! with an incubation delay on the infectious contact and a build-up
//! delay on vaccine protection.
//!
//! State order is `[S, I, R, V]`. Control is `[u, v]`: intervention
//! stringency and vaccination rate. Slot 1 carries the state delayed by
//! `h1` (only its `I` component enters), slot 2 the state delayed by
//! `h2` (only its `S` component enters).

use nalgebra::{dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::control::ControlSet;
use crate::problem::ProblemDef;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirvParams {
    /// Birth rate per day.
    pub lambda: f64,
    pub mu_s: f64,
    pub mu_i: f64,
    pub mu_r: f64,
    pub mu_v: f64,
    /// Transmission rate per day.
    pub beta: f64,
    /// Recovery rate per day.
    pub gamma: f64,
    /// Waning rate of natural immunity per day.
    pub sigma_r: f64,
    /// Waning rate of vaccine immunity per day.
    pub sigma_v: f64,
    /// Breakthrough infection probability for the recovered.
    pub theta_r: f64,
    /// Breakthrough infection probability for the vaccinated.
    pub theta_v: f64,
    /// Incubation delay in days.
    pub h1: f64,
    /// Vaccine build-up delay in days.
    pub h2: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub w_i: f64,
    pub w_u: f64,
    pub w_v: f64,
    /// Coefficient of the terminal cost `I(T)^2 / 2`.
    pub terminal_weight: f64,
}

impl SirvParams {
    /// Parameter set for the 350-day benchmark run.
    pub fn benchmark() -> Self {
        SirvParams {
            lambda: 2.91e-5,
            mu_s: 2.90e-5,
            mu_i: 2.90e-5,
            mu_r: 2.90e-5,
            mu_v: 2.90e-5,
            beta: 1.0,
            gamma: 1.0 / 6.0,
            sigma_r: 1.0 / 500.0,
            sigma_v: 1.0 / 500.0,
            theta_r: 0.0021,
            theta_v: 0.0013,
            h1: 5.0,
            h2: 7.0,
            u_max: 0.4,
            v_max: 0.8,
            w_i: 1e4,
            w_u: 1.0,
            w_v: 10.0,
            terminal_weight: 1.0,
        }
    }

    /// Initial compartment mix used with `benchmark`: a single seed
    /// infection of size 1e-6 in an otherwise susceptible population.
    pub fn benchmark_initial_state() -> DVector<f64> {
        let i0 = 1e-6;
        dvector![1.0 - i0, i0, 0.0, 0.0]
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        let nonneg = [
            ("lambda", self.lambda),
            ("mu_s", self.mu_s),
            ("mu_i", self.mu_i),
            ("mu_r", self.mu_r),
            ("mu_v", self.mu_v),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("sigma_r", self.sigma_r),
            ("sigma_v", self.sigma_v),
            ("u_max", self.u_max),
            ("v_max", self.v_max),
            ("w_i", self.w_i),
            ("w_u", self.w_u),
            ("w_v", self.w_v),
            ("terminal_weight", self.terminal_weight),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                bad.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        for (name, v) in [("theta_r", self.theta_r), ("theta_v", self.theta_v)] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("h1", self.h1), ("h2", self.h2)] {
            if !(v > 0.0) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
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

    pub fn from_json(value: &serde_json::Value) -> Result<Self, ModelError> {
        const REQUIRED: &[&str] = &[
            "lambda", "mu_s", "mu_i", "mu_r", "mu_v", "beta", "gamma", "sigma_r",
            "sigma_v", "theta_r", "theta_v", "h1", "h2", "u_max", "v_max", "w_i",
            "w_u", "w_v",
        ];
        const OPTIONAL: &[&str] = &["terminal_weight"];
        let map = super::extract_coefficients(value, REQUIRED, OPTIONAL)?;
        let terminal_weight = match value.get("terminal_weight") {
            None => 1.0,
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ModelError::NotANumber("terminal_weight".into()))?,
        };
        let get = |k: &str| map[k];
        let params = SirvParams {
            lambda: get("lambda"),
            mu_s: get("mu_s"),
            mu_i: get("mu_i"),
            mu_r: get("mu_r"),
            mu_v: get("mu_v"),
            beta: get("beta"),
            gamma: get("gamma"),
            sigma_r: get("sigma_r"),
            sigma_v: get("sigma_v"),
            theta_r: get("theta_r"),
            theta_v: get("theta_v"),
            h1: get("h1"),
            h2: get("h2"),
            u_max: get("u_max"),
            v_max: get("v_max"),
            w_i: get("w_i"),
            w_u: get("w_u"),
            w_v: get("w_v"),
            terminal_weight,
        };
        params.validate().map_err(ModelError::InvalidParams)?;
        Ok(params)
    }
}

/// Box of feasible `[u, v]` controls.
pub fn sirv_control_set(params: &SirvParams) -> ControlSet {
    ControlSet::boxed(dvector![0.0, 0.0], dvector![params.u_max, params.v_max])
}

pub fn sirv_problem(params: &SirvParams) -> Result<ProblemDef, ModelError> {
    params.validate().map_err(ModelError::InvalidParams)?;
    let p = *params;

    let builder = ProblemDef::builder(4, 2, 2)
        .dynamics(move |_, xs, ctl| {
            let (s, i, r, v) = (xs[0][0], xs[0][1], xs[0][2], xs[0][3]);
            let ih1 = xs[1][1];
            let sh2 = xs[2][0];
            let (u, vax) = (ctl[0], ctl[1]);
            let contact = p.beta * (1.0 - u) * ih1;
            dvector![
                p.lambda - contact * s + p.sigma_r * r + p.sigma_v * v - vax * sh2
                    - p.mu_s * s,
                contact * (s + p.theta_v * v + p.theta_r * r) - p.gamma * i - p.mu_i * i,
                p.gamma * i - p.sigma_r * r - p.theta_r * contact * r - p.mu_r * r,
                vax * sh2 - p.sigma_v * v - p.theta_v * contact * v - p.mu_v * v
            ]
        })
        .state_jacobian(move |_, xs, ctl, slot| {
            let (s, r, v) = (xs[0][0], xs[0][2], xs[0][3]);
            let ih1 = xs[1][1];
            let (u, vax) = (ctl[0], ctl[1]);
            let contact = p.beta * (1.0 - u) * ih1;
            let mut jac = DMatrix::zeros(4, 4);
            match slot {
                0 => {
                    jac[(0, 0)] = -contact - p.mu_s;
                    jac[(0, 2)] = p.sigma_r;
                    jac[(0, 3)] = p.sigma_v;
                    jac[(1, 0)] = contact;
                    jac[(1, 1)] = -p.gamma - p.mu_i;
                    jac[(1, 2)] = p.theta_r * contact;
                    jac[(1, 3)] = p.theta_v * contact;
                    jac[(2, 1)] = p.gamma;
                    jac[(2, 2)] = -p.sigma_r - p.theta_r * contact - p.mu_r;
                    jac[(3, 3)] = -p.sigma_v - p.theta_v * contact - p.mu_v;
                }
                1 => {
                    // Only the delayed infectious component enters.
                    let d_contact = p.beta * (1.0 - u);
                    jac[(0, 1)] = -d_contact * s;
                    jac[(1, 1)] = d_contact * (s + p.theta_v * v + p.theta_r * r);
                    jac[(2, 1)] = -p.theta_r * d_contact * r;
                    jac[(3, 1)] = -p.theta_v * d_contact * v;
                }
                2 => {
                    // Only the delayed susceptible component enters.
                    jac[(0, 0)] = -vax;
                    jac[(3, 0)] = vax;
                }
                _ => unreachable!("slot out of range"),
            }
            jac
        })
        .control_jacobian(move |_, xs, _| {
            let (s, r, v) = (xs[0][0], xs[0][2], xs[0][3]);
            let ih1 = xs[1][1];
            let sh2 = xs[2][0];
            let mut jac = DMatrix::zeros(4, 2);
            jac[(0, 0)] = p.beta * s * ih1;
            jac[(0, 1)] = -sh2;
            jac[(1, 0)] = -p.beta * (s + p.theta_v * v + p.theta_r * r) * ih1;
            jac[(2, 0)] = p.theta_r * p.beta * r * ih1;
            jac[(3, 0)] = p.theta_v * p.beta * v * ih1;
            jac[(3, 1)] = sh2;
            jac
        })
        .running_cost(move |_, xs, ctl| {
            p.w_i * xs[0][1] + p.w_u * ctl[0] * ctl[0] + p.w_v * ctl[1] * ctl[1]
        })
        .state_gradient(move |_, _, _, slot| {
            if slot == 0 {
                dvector![0.0, p.w_i, 0.0, 0.0]
            } else {
                DVector::zeros(4)
            }
        })
        .control_gradient(move |_, _, ctl| {
            dvector![2.0 * p.w_u * ctl[0], 2.0 * p.w_v * ctl[1]]
        })
        .control_hessian(move |_, _, _, _| {
            DMatrix::from_diagonal(&dvector![2.0 * p.w_u, 2.0 * p.w_v])
        })
        .terminal_cost(
            move |x| p.terminal_weight * x[1] * x[1] / 2.0,
            move |x| dvector![0.0, p.terminal_weight * x[1], 0.0, 0.0],
        )
        .terminal_hessian(move |_| {
            let mut h = DMatrix::zeros(4, 4);
            h[(1, 1)] = p.terminal_weight;
            h
        })
        .control_affine(true)
        .quadratic_control_cost(true)
        .state_names(["S", "I", "R", "V"])
        .control_names(["u", "v"]);

    Ok(builder.build().expect("all callbacks supplied"))
}
