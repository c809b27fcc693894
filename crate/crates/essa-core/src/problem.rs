//! Problem definitions: delayed dynamics, running cost, and their
//! first derivatives in every delayed-state slot and in the control.
//!
//! Dynamics and cost callbacks receive the stacked delayed-state tuple as
//! a slice `xs` with `k + 1` entries: `xs[0]` is the current state and
//! `xs[j]` is the state delayed by the `j`-th delay. Derivative callbacks
//! are indexed by the same slot number.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type DynamicsFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type SlotJacobianFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;
pub type ControlJacobianFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>) -> f64 + Send + Sync>;
pub type SlotGradientFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>, usize) -> DVector<f64> + Send + Sync>;
pub type ControlGradientFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type TerminalValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type TerminalGradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type TerminalHessianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ControlHessianFn =
    Arc<dyn Fn(f64, &[DVector<f64>], &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Error)]
pub enum ProblemDefError {
    #[error("missing required callback: {0}")]
    MissingCallback(&'static str),
    #[error("terminal cost requires both value and gradient callbacks")]
    IncompleteTerminalCost,
    #[error("expected {expected} names, got {got}")]
    BadNameCount { expected: usize, got: usize },
}

/// Terminal cost `gamma(x(T))` with its derivatives. The Hessian is
/// required for absorbing the terminal cost into the running cost.
#[derive(Clone)]
pub struct TerminalCost {
    pub value: TerminalValueFn,
    pub gradient: TerminalGradientFn,
    pub hessian: Option<TerminalHessianFn>,
}

/// Optimal control problem data on the delayed dynamics.
///
/// Immutable after construction and cheap to clone; callbacks are shared.
#[derive(Clone)]
pub struct ProblemDef {
    state_dim: usize,
    control_dim: usize,
    num_delays: usize,
    dynamics: DynamicsFn,
    state_jacobian: SlotJacobianFn,
    control_jacobian: ControlJacobianFn,
    running_cost: ScalarFn,
    state_gradient: SlotGradientFn,
    control_gradient: ControlGradientFn,
    terminal: Option<TerminalCost>,
    control_hessian: Option<ControlHessianFn>,
    control_affine: bool,
    quadratic_control_cost: bool,
    state_names: Vec<String>,
    control_names: Vec<String>,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("num_delays", &self.num_delays)
            .field("control_affine", &self.control_affine)
            .field("quadratic_control_cost", &self.quadratic_control_cost)
            .field("has_terminal", &self.terminal.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemDef {
    pub fn builder(state_dim: usize, control_dim: usize, num_delays: usize) -> ProblemBuilder {
        ProblemBuilder {
            state_dim,
            control_dim,
            num_delays,
            dynamics: None,
            state_jacobian: None,
            control_jacobian: None,
            running_cost: None,
            state_gradient: None,
            control_gradient: None,
            terminal_value: None,
            terminal_gradient: None,
            terminal_hessian: None,
            control_hessian: None,
            control_affine: false,
            quadratic_control_cost: false,
            state_names: None,
            control_names: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    /// Number of positive delays `k`; the stacked tuple has `k + 1` slots.
    pub fn num_delays(&self) -> usize {
        self.num_delays
    }

    pub fn num_slots(&self) -> usize {
        self.num_delays + 1
    }

    pub fn dynamics(&self, t: f64, xs: &[DVector<f64>], u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics)(t, xs, u)
    }

    /// Jacobian of the dynamics with respect to delayed-state slot `slot`.
    pub fn state_jacobian(
        &self,
        t: f64,
        xs: &[DVector<f64>],
        u: &DVector<f64>,
        slot: usize,
    ) -> DMatrix<f64> {
        (self.state_jacobian)(t, xs, u, slot)
    }

    pub fn control_jacobian(&self, t: f64, xs: &[DVector<f64>], u: &DVector<f64>) -> DMatrix<f64> {
        (self.control_jacobian)(t, xs, u)
    }

    pub fn running_cost(&self, t: f64, xs: &[DVector<f64>], u: &DVector<f64>) -> f64 {
        (self.running_cost)(t, xs, u)
    }

    /// Gradient of the running cost with respect to delayed-state slot `slot`.
    pub fn state_gradient(
        &self,
        t: f64,
        xs: &[DVector<f64>],
        u: &DVector<f64>,
        slot: usize,
    ) -> DVector<f64> {
        (self.state_gradient)(t, xs, u, slot)
    }

    pub fn control_gradient(&self, t: f64, xs: &[DVector<f64>], u: &DVector<f64>) -> DVector<f64> {
        (self.control_gradient)(t, xs, u)
    }

    pub fn terminal(&self) -> Option<&TerminalCost> {
        self.terminal.as_ref()
    }

    /// Exact Hamiltonian control Hessian, when the user supplied one.
    pub fn control_hessian(
        &self,
        t: f64,
        xs: &[DVector<f64>],
        u: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        self.control_hessian.as_ref().map(|h| h(t, xs, u, lambda))
    }

    pub fn has_control_hessian(&self) -> bool {
        self.control_hessian.is_some()
    }

    /// Dynamics have the form `f0(t, X) + G(t, X) u`.
    pub fn is_control_affine(&self) -> bool {
        self.control_affine
    }

    /// Running cost is at most quadratic in `u` with a diagonal,
    /// control-independent, positive semidefinite quadratic part.
    pub fn has_quadratic_control_cost(&self) -> bool {
        self.quadratic_control_cost
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn control_names(&self) -> &[String] {
        &self.control_names
    }

    pub(crate) fn dynamics_fn(&self) -> DynamicsFn {
        self.dynamics.clone()
    }

    pub(crate) fn state_jacobian_fn(&self) -> SlotJacobianFn {
        self.state_jacobian.clone()
    }

    pub(crate) fn control_jacobian_fn(&self) -> ControlJacobianFn {
        self.control_jacobian.clone()
    }

    pub(crate) fn running_cost_fn(&self) -> ScalarFn {
        self.running_cost.clone()
    }

    pub(crate) fn state_gradient_fn(&self) -> SlotGradientFn {
        self.state_gradient.clone()
    }

    pub(crate) fn control_gradient_fn(&self) -> ControlGradientFn {
        self.control_gradient.clone()
    }

    pub(crate) fn control_hessian_fn(&self) -> Option<ControlHessianFn> {
        self.control_hessian.clone()
    }

    /// Copy with the terminal cost removed and the running cost replaced.
    /// Used by the terminal-cost absorption path.
    pub(crate) fn with_replaced_cost(
        &self,
        running_cost: ScalarFn,
        state_gradient: SlotGradientFn,
        control_gradient: ControlGradientFn,
        control_hessian: Option<ControlHessianFn>,
        quadratic_control_cost: bool,
    ) -> ProblemDef {
        ProblemDef {
            running_cost,
            state_gradient,
            control_gradient,
            terminal: None,
            control_hessian,
            quadratic_control_cost,
            ..self.clone()
        }
    }
}

pub struct ProblemBuilder {
    state_dim: usize,
    control_dim: usize,
    num_delays: usize,
    dynamics: Option<DynamicsFn>,
    state_jacobian: Option<SlotJacobianFn>,
    control_jacobian: Option<ControlJacobianFn>,
    running_cost: Option<ScalarFn>,
    state_gradient: Option<SlotGradientFn>,
    control_gradient: Option<ControlGradientFn>,
    terminal_value: Option<TerminalValueFn>,
    terminal_gradient: Option<TerminalGradientFn>,
    terminal_hessian: Option<TerminalHessianFn>,
    control_hessian: Option<ControlHessianFn>,
    control_affine: bool,
    quadratic_control_cost: bool,
    state_names: Option<Vec<String>>,
    control_names: Option<Vec<String>>,
}

impl ProblemBuilder {
    pub fn dynamics(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dynamics = Some(Arc::new(f));
        self
    }

    pub fn state_jacobian(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>, usize) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.state_jacobian = Some(Arc::new(f));
        self
    }

    pub fn control_jacobian(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.control_jacobian = Some(Arc::new(f));
        self
    }

    pub fn running_cost(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Some(Arc::new(f));
        self
    }

    pub fn state_gradient(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>, usize) -> DVector<f64>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.state_gradient = Some(Arc::new(f));
        self
    }

    pub fn control_gradient(
        mut self,
        f: impl Fn(f64, &[DVector<f64>], &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.control_gradient = Some(Arc::new(f));
        self
    }

    pub fn terminal_cost(
        mut self,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_value = Some(Arc::new(value));
        self.terminal_gradient = Some(Arc::new(gradient));
        self
    }

    pub fn terminal_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_hessian = Some(Arc::new(hessian));
        self
    }

    pub fn control_hessian(
        mut self,
        h: impl Fn(f64, &[DVector<f64>], &DVector<f64>, &DVector<f64>) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.control_hessian = Some(Arc::new(h));
        self
    }

    pub fn control_affine(mut self, yes: bool) -> Self {
        self.control_affine = yes;
        self
    }

    pub fn quadratic_control_cost(mut self, yes: bool) -> Self {
        self.quadratic_control_cost = yes;
        self
    }

    pub fn state_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.state_names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn control_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.control_names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn build(self) -> Result<ProblemDef, ProblemDefError> {
        let dynamics =
            self.dynamics.ok_or(ProblemDefError::MissingCallback("dynamics"))?;
        let state_jacobian =
            self.state_jacobian.ok_or(ProblemDefError::MissingCallback("state_jacobian"))?;
        let control_jacobian =
            self.control_jacobian.ok_or(ProblemDefError::MissingCallback("control_jacobian"))?;
        let running_cost =
            self.running_cost.ok_or(ProblemDefError::MissingCallback("running_cost"))?;
        let state_gradient =
            self.state_gradient.ok_or(ProblemDefError::MissingCallback("state_gradient"))?;
        let control_gradient =
            self.control_gradient.ok_or(ProblemDefError::MissingCallback("control_gradient"))?;

        let terminal = match (self.terminal_value, self.terminal_gradient) {
            (None, None) => None,
            (Some(value), Some(gradient)) => {
                Some(TerminalCost { value, gradient, hessian: self.terminal_hessian })
            }
            _ => return Err(ProblemDefError::IncompleteTerminalCost),
        };

        let state_names = match self.state_names {
            Some(names) if names.len() != self.state_dim => {
                return Err(ProblemDefError::BadNameCount {
                    expected: self.state_dim,
                    got: names.len(),
                })
            }
            Some(names) => names,
            None => (0..self.state_dim).map(|i| format!("x{i}")).collect(),
        };
        let control_names = match self.control_names {
            Some(names) if names.len() != self.control_dim => {
                return Err(ProblemDefError::BadNameCount {
                    expected: self.control_dim,
                    got: names.len(),
                })
            }
            Some(names) => names,
            None => (0..self.control_dim).map(|i| format!("u{i}")).collect(),
        };

        Ok(ProblemDef {
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            num_delays: self.num_delays,
            dynamics,
            state_jacobian,
            control_jacobian,
            running_cost,
            state_gradient,
            control_gradient,
            terminal,
            control_hessian: self.control_hessian,
            control_affine: self.control_affine,
            quadratic_control_cost: self.quadratic_control_cost,
            state_names,
            control_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn builder_requires_all_core_callbacks() {
        let err = ProblemDef::builder(1, 1, 0).build().unwrap_err();
        assert!(matches!(err, ProblemDefError::MissingCallback("dynamics")));
    }

    #[test]
    fn builder_defaults_names() {
        let p = ProblemDef::builder(2, 1, 0)
            .dynamics(|_, _, _| dvector![0.0, 0.0])
            .state_jacobian(|_, _, _, _| DMatrix::zeros(2, 2))
            .control_jacobian(|_, _, _| DMatrix::zeros(2, 1))
            .running_cost(|_, _, _| 0.0)
            .state_gradient(|_, _, _, _| dvector![0.0, 0.0])
            .control_gradient(|_, _, _| dvector![0.0])
            .build()
            .unwrap();
        assert_eq!(p.state_names(), &["x0".to_string(), "x1".to_string()]);
        assert_eq!(p.control_names(), &["u0".to_string()]);
        assert!(p.terminal().is_none());
    }

    #[test]
    fn callbacks_round_trip() {
        let p = ProblemDef::builder(1, 1, 0)
            .dynamics(|_, xs, u| dvector![2.0 * xs[0][0] + u[0]])
            .state_jacobian(|_, _, _, _| dmatrix![2.0])
            .control_jacobian(|_, _, _| dmatrix![1.0])
            .running_cost(|_, xs, u| xs[0][0] + u[0])
            .state_gradient(|_, _, _, _| dvector![1.0])
            .control_gradient(|_, _, _| dvector![1.0])
            .build()
            .unwrap();
        let xs = [dvector![3.0]];
        let u = dvector![1.5];
        assert_eq!(p.dynamics(0.0, &xs, &u), dvector![7.5]);
        assert_eq!(p.running_cost(0.0, &xs, &u), 4.5);
        assert_eq!(p.state_jacobian(0.0, &xs, &u, 0), dmatrix![2.0]);
    }
}
