//! Solver configuration with scale-aware defaults.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Initial diagonal of the proximal weight matrix: either one entry
/// broadcast across every control component, or a full per-component
/// vector whose length must match the control dimension.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CZeroDiag {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl CZeroDiag {
    /// Materializes the diagonal for a control of dimension `m`.
    pub fn resolve(&self, m: usize) -> Result<DVector<f64>, String> {
        match self {
            CZeroDiag::Uniform(v) => Ok(DVector::from_element(m, *v)),
            CZeroDiag::PerComponent(entries) if entries.len() == m => {
                Ok(DVector::from_row_slice(entries))
            }
            CZeroDiag::PerComponent(entries) => Err(format!(
                "c0_diag has {} entries but the control has dimension {m}",
                entries.len()
            )),
        }
    }

    /// Smallest diagonal entry; this is the `xi0` of the worst-case
    /// iteration bound when no explicit value is configured.
    pub fn min_entry(&self) -> f64 {
        match self {
            CZeroDiag::Uniform(v) => *v,
            CZeroDiag::PerComponent(entries) => {
                entries.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn positive(&self) -> bool {
        match self {
            CZeroDiag::Uniform(v) => *v > 0.0,
            CZeroDiag::PerComponent(entries) => {
                !entries.is_empty() && entries.iter().all(|v| *v > 0.0)
            }
        }
    }
}

impl From<f64> for CZeroDiag {
    fn from(v: f64) -> Self {
        CZeroDiag::Uniform(v)
    }
}

impl From<Vec<f64>> for CZeroDiag {
    fn from(v: Vec<f64>) -> Self {
        CZeroDiag::PerComponent(v)
    }
}

/// Settings for the numerical inner minimizer used when the augmented
/// Hamiltonian has no closed-form minimizer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InnerMinSettings {
    /// Projected-descent iteration cap per grid node.
    pub max_steps: usize,
    /// Stop once the projected step falls below this (sup norm).
    pub step_tol: f64,
}

impl Default for InnerMinSettings {
    fn default() -> Self {
        InnerMinSettings { max_steps: 30, step_tol: 1e-12 }
    }
}

/// Tuning knobs for the outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial diagonal of the proximal weight matrix, scalar or
    /// per-component.
    pub c0_diag: CZeroDiag,
    /// Multiplier applied to the proximal weights after a rejected sweep.
    pub c_growth: f64,
    /// Optional shrink factor in (0, 1] applied after an accepted sweep;
    /// 1.0 leaves the weights untouched.
    pub c_relax: f64,
    /// Terminate when the squared L2 change of the control drops to this.
    /// `None` selects `1e-8 * (t_final - t0) * control_dim` at solve time.
    pub eta_tol: Option<f64>,
    pub max_outer_iters: usize,
    /// Cap on proximal-weight increases within a single outer iteration.
    pub max_c_increases_per_iter: usize,
    /// Threshold on the projected-gradient optimality residual reported
    /// at termination.
    pub residual_tol: f64,
    /// Treat a residual above `residual_tol` at termination as an error
    /// instead of a warning.
    pub strict_residual: bool,
    /// Known lower bound on the cost, used for the iteration-count bound.
    pub j_lower_bound: Option<f64>,
    /// Smallest proximal diagonal entry assumed by the iteration-count
    /// bound; defaults to the smallest entry of `c0_diag`.
    pub xi0: Option<f64>,
    pub inner: InnerMinSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c0_diag: CZeroDiag::Uniform(1.0),
            c_growth: 2.0,
            c_relax: 1.0,
            eta_tol: None,
            max_outer_iters: 500,
            max_c_increases_per_iter: 40,
            residual_tol: 1e-3,
            strict_residual: false,
            j_lower_bound: None,
            xi0: None,
            inner: InnerMinSettings::default(),
        }
    }
}

impl SolverConfig {
    /// Tolerance actually used for a given horizon and control dimension.
    pub fn resolved_eta_tol(&self, horizon: f64, control_dim: usize) -> f64 {
        self.eta_tol.unwrap_or(1e-8 * horizon * control_dim as f64)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !self.c0_diag.positive() {
            problems.push(format!("c0_diag entries must be positive, got {:?}", self.c0_diag));
        }
        if !(self.c_growth > 1.0) {
            problems.push(format!("c_growth must exceed 1, got {}", self.c_growth));
        }
        if !(self.c_relax > 0.0 && self.c_relax <= 1.0) {
            problems.push(format!("c_relax must lie in (0, 1], got {}", self.c_relax));
        }
        if let Some(eta) = self.eta_tol {
            if !(eta > 0.0) {
                problems.push(format!("eta_tol must be positive, got {eta}"));
            }
        }
        if self.max_outer_iters == 0 {
            problems.push("max_outer_iters must be at least 1".to_string());
        }
        if !(self.residual_tol > 0.0) {
            problems.push(format!("residual_tol must be positive, got {}", self.residual_tol));
        }
        if self.inner.max_steps == 0 {
            problems.push("inner.max_steps must be at least 1".to_string());
        }
        if !(self.inner.step_tol >= 0.0) {
            problems.push(format!("inner.step_tol must be nonnegative, got {}", self.inner.step_tol));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}
