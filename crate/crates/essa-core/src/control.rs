//! Admissible control sets and projection onto them.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("custom projection oracle failed: {0}")]
    OracleFailure(String),
    #[error("point dimension {got} does not match control dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Projection oracle for non-box control sets. Must be idempotent and
/// non-expansive; failures are propagated to the caller.
pub type ProjectionOracle =
    Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>, String> + Send + Sync>;

/// Compact convex set of admissible controls.
#[derive(Clone)]
pub enum ControlSet {
    /// Componentwise bounds `lo <= u <= hi`.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// User-supplied projection onto an arbitrary compact convex set.
    Custom { dim: usize, project: ProjectionOracle },
}

impl fmt::Debug for ControlSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSet::Box { lo, hi } => {
                f.debug_struct("Box").field("lo", lo).field("hi", hi).finish()
            }
            ControlSet::Custom { dim, .. } => {
                f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl ControlSet {
    /// Box set from bound vectors.
    ///
    /// # Panics
    /// Panics when the bounds differ in length or `lo > hi` somewhere.
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "bound dimensions differ");
        assert!(lo.iter().zip(hi.iter()).all(|(l, h)| l <= h), "lo must not exceed hi");
        ControlSet::Box { lo, hi }
    }

    /// Scalar interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::boxed(DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Custom { dim, .. } => *dim,
        }
    }

    /// Box midpoint, the default nominal control. `None` for custom sets.
    pub fn midpoint(&self) -> Option<DVector<f64>> {
        match self {
            ControlSet::Box { lo, hi } => Some((lo + hi) * 0.5),
            ControlSet::Custom { .. } => None,
        }
    }

    pub fn is_box(&self) -> bool {
        matches!(self, ControlSet::Box { .. })
    }

    /// True when the point already lies in the set (up to `tol` for boxes).
    pub fn contains(&self, q: &DVector<f64>, tol: f64) -> bool {
        match self {
            ControlSet::Box { lo, hi } => q
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(&x, (&l, &h))| x >= l - tol && x <= h + tol),
            ControlSet::Custom { project, .. } => match project(q) {
                Ok(p) => (q - p).amax() <= tol,
                Err(_) => false,
            },
        }
    }
}

/// Nearest point of the set: componentwise clamp for boxes, the supplied
/// oracle otherwise.
pub fn project(set: &ControlSet, q: &DVector<f64>) -> Result<DVector<f64>, ProjectionError> {
    if q.len() != set.dim() {
        return Err(ProjectionError::DimensionMismatch { expected: set.dim(), got: q.len() });
    }
    match set {
        ControlSet::Box { lo, hi } => Ok(project_box(lo, hi, q)),
        ControlSet::Custom { project, .. } => {
            project(q).map_err(ProjectionError::OracleFailure)
        }
    }
}

/// Infallible clamp onto a box, used on solver hot paths.
pub fn project_box(lo: &DVector<f64>, hi: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(q.len(), |i, _| q[i].clamp(lo[i], hi[i]))
}
