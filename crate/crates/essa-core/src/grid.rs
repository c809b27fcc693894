//! Uniform time mesh with delays expressed as exact node counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to decide whether a delay is an integer
/// multiple of the mesh width.
const DELAY_REL_TOL: f64 = 1e-9;

/// Cap on the search for a repaired node count in [`build_grid`].
const REPAIR_SEARCH_CAP: usize = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("horizon end {t_final} must exceed start {t0}")]
    EmptyHorizon { t0: f64, t_final: f64 },
    #[error("node count must be at least 1")]
    NoNodes,
    #[error("delays must be positive and strictly increasing, got {0:?}")]
    UnorderedDelays(Vec<f64>),
    #[error(
        "delay {delay} is not an integer multiple of the mesh width {dt}\
         {}", suggestion_text(*.suggested_n)
    )]
    NonIntegerDelay {
        delay: f64,
        dt: f64,
        /// Smallest node count at or above the requested one for which
        /// every delay lands on a node, when one was found.
        suggested_n: Option<usize>,
    },
}

fn suggestion_text(n: Option<usize>) -> String {
    match n {
        Some(n) => format!("; the smallest repairing node count is N = {n}"),
        None => String::new(),
    }
}

/// Uniform grid over `[t0, T]` with `N + 1` nodes and each delay pinned
/// to an exact node offset, so delayed lookups never interpolate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t0: f64,
    t_final: f64,
    num_steps: usize,
    dt: f64,
    delay_steps: Vec<usize>,
}

impl Grid {
    /// Start of the horizon.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// End of the horizon.
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of steps `N`; the grid has `N + 1` nodes.
    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// Number of nodes, `N + 1`.
    pub fn num_nodes(&self) -> usize {
        self.num_steps + 1
    }

    /// Mesh width.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Delay offsets in nodes, strictly increasing. Does not include the
    /// implicit zero offset of the current-state slot.
    pub fn delay_steps(&self) -> &[usize] {
        &self.delay_steps
    }

    /// Number of positive delays `k`; delayed-state tuples have `k + 1` slots.
    pub fn num_delays(&self) -> usize {
        self.delay_steps.len()
    }

    /// Largest delay in nodes (zero when there are no delays).
    pub fn max_delay_steps(&self) -> usize {
        self.delay_steps.last().copied().unwrap_or(0)
    }

    /// Node offset of delay slot `j`, where slot 0 is the current state.
    pub fn slot_offset(&self, slot: usize) -> usize {
        if slot == 0 {
            0
        } else {
            self.delay_steps[slot - 1]
        }
    }

    /// Time of node `j`, computed as `t0 + j * dt` so it is exactly
    /// reproducible.
    pub fn node_time(&self, node: usize) -> f64 {
        self.t0 + node as f64 * self.dt
    }

    /// Delay durations in time units.
    pub fn delays(&self) -> Vec<f64> {
        self.delay_steps.iter().map(|&d| d as f64 * self.dt).collect()
    }
}

/// Builds a uniform grid on `[t0, t_final]` with `num_steps` intervals and
/// the given delay durations.
///
/// Every delay must be an integer multiple of the mesh width; otherwise
/// [`GridError::NonIntegerDelay`] reports the smallest node count that
/// would repair the mesh.
pub fn build_grid(
    t0: f64,
    t_final: f64,
    num_steps: usize,
    delays: &[f64],
) -> Result<Grid, GridError> {
    if !(t_final > t0) {
        return Err(GridError::EmptyHorizon { t0, t_final });
    }
    if num_steps == 0 {
        return Err(GridError::NoNodes);
    }
    let ordered = delays.windows(2).all(|w| w[0] < w[1]) && delays.iter().all(|&h| h > 0.0);
    if !ordered {
        return Err(GridError::UnorderedDelays(delays.to_vec()));
    }

    let dt = (t_final - t0) / num_steps as f64;
    let mut delay_steps = Vec::with_capacity(delays.len());
    for &h in delays {
        match delay_to_steps(h, dt) {
            Some(d) => delay_steps.push(d),
            None => {
                let suggested_n = repair_node_count(t0, t_final, num_steps, delays);
                return Err(GridError::NonIntegerDelay { delay: h, dt, suggested_n });
            }
        }
    }

    Ok(Grid { t0, t_final, num_steps, dt, delay_steps })
}

fn delay_to_steps(delay: f64, dt: f64) -> Option<usize> {
    let ratio = delay / dt;
    let rounded = ratio.round();
    if rounded < 1.0 {
        return None;
    }
    if ((ratio - rounded) / rounded).abs() <= DELAY_REL_TOL {
        Some(rounded as usize)
    } else {
        None
    }
}

fn repair_node_count(t0: f64, t_final: f64, num_steps: usize, delays: &[f64]) -> Option<usize> {
    let span = t_final - t0;
    (num_steps..=REPAIR_SEARCH_CAP).find(|&n| {
        let dt = span / n as f64;
        delays.iter().all(|&h| delay_to_steps(h, dt).is_some())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_style_grid() {
        let g = build_grid(0.0, 350.0, 3500, &[5.0, 7.0]).unwrap();
        assert_eq!(g.dt(), 0.1);
        assert_eq!(g.delay_steps(), &[50, 70]);
        assert_eq!(g.num_delays(), 2);
        assert_eq!(g.max_delay_steps(), 70);
    }

    #[test]
    fn non_integer_delay_suggests_repair() {
        let err = build_grid(0.0, 1.0, 10, &[0.25]).unwrap_err();
        match err {
            GridError::NonIntegerDelay { suggested_n, .. } => {
                // 0.25 = 3 / 12 is the first hit at or above the request.
                assert_eq!(suggested_n, Some(12));
                let g = build_grid(0.0, 1.0, 12, &[0.25]).unwrap();
                assert_eq!(g.delay_steps(), &[3]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_delay_set_is_a_plain_ode_grid() {
        let g = build_grid(0.0, 1.0, 10, &[]).unwrap();
        assert_eq!(g.num_delays(), 0);
        assert_eq!(g.max_delay_steps(), 0);
        assert_eq!(g.slot_offset(0), 0);
    }

    #[test]
    fn node_times_are_reproducible_and_cover_the_horizon() {
        let g = build_grid(0.0, 350.0, 3500, &[5.0, 7.0]).unwrap();
        assert_eq!(g.node_time(0), 0.0);
        for j in 0..=g.num_steps() {
            assert_eq!(g.node_time(j), 0.0 + j as f64 * g.dt());
        }
        assert!((g.node_time(g.num_steps()) - 350.0).abs() <= 350.0 * f64::EPSILON * 4.0);
    }

    #[test]
    fn delays_exceeding_horizon_are_allowed() {
        let g = build_grid(0.0, 1.0, 10, &[0.5, 2.0]).unwrap();
        assert_eq!(g.delay_steps(), &[5, 20]);
    }

    #[test]
    fn rejects_unordered_or_nonpositive_delays() {
        assert!(matches!(
            build_grid(0.0, 1.0, 10, &[0.2, 0.2]),
            Err(GridError::UnorderedDelays(_))
        ));
        assert!(matches!(
            build_grid(0.0, 1.0, 10, &[-0.1]),
            Err(GridError::UnorderedDelays(_))
        ));
    }

    #[test]
    fn rejects_degenerate_horizon() {
        assert!(matches!(build_grid(1.0, 1.0, 10, &[]), Err(GridError::EmptyHorizon { .. })));
        assert!(matches!(build_grid(0.0, 1.0, 0, &[]), Err(GridError::NoNodes)));
    }
}
