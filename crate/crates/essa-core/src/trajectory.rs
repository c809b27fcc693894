//! Node-sampled trajectories and pre-horizon history.

use nalgebra::DVector;

use crate::grid::Grid;

/// Values of a vector quantity at every grid node.
///
/// State and costate trajectories are node samples of an absolutely
/// continuous function; control trajectories are piecewise constant, with
/// the node-`j` value holding on `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid,
    dim: usize,
    values: Vec<DVector<f64>>,
}

impl Trajectory {
    /// A trajectory that holds `value` at every node.
    pub fn constant(grid: &Grid, value: DVector<f64>) -> Self {
        let values = vec![value.clone(); grid.num_nodes()];
        Self { grid: grid.clone(), dim: value.len(), values }
    }

    /// The zero trajectory of dimension `dim`.
    pub fn zeros(grid: &Grid, dim: usize) -> Self {
        Self::constant(grid, DVector::zeros(dim))
    }

    /// Builds a trajectory from one value per node.
    ///
    /// # Panics
    /// Panics when the number of values differs from the node count or the
    /// values differ in dimension.
    pub fn from_values(grid: &Grid, values: Vec<DVector<f64>>) -> Self {
        assert_eq!(values.len(), grid.num_nodes(), "one value per node required");
        let dim = values[0].len();
        assert!(values.iter().all(|v| v.len() == dim), "mixed dimensions");
        Self { grid: grid.clone(), dim, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, node: usize) -> &DVector<f64> {
        &self.values[node]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut DVector<f64> {
        &mut self.values[node]
    }

    pub fn set_node(&mut self, node: usize, value: DVector<f64>) {
        assert_eq!(value.len(), self.dim);
        self.values[node] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.values.iter()
    }

    /// Squared L2 norm of the difference over `[t0, T]`, with the
    /// left-endpoint rectangle rule matching the piecewise-constant
    /// control semantics (node `N` carries no interval).
    pub fn l2_sq_diff(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.values.len(), other.values.len());
        let dt = self.grid.dt();
        let mut acc = 0.0;
        for j in 0..self.grid.num_steps() {
            acc += (&self.values[j] - &other.values[j]).norm_squared();
        }
        dt * acc
    }

    /// Largest componentwise absolute difference over all nodes.
    pub fn sup_diff(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let mut sup: f64 = 0.0;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            sup = sup.max((a - b).amax());
        }
        sup
    }
}

/// Pre-horizon data covering `[t0 - h_k, t0]`.
///
/// The value at offset zero is the initial state. A sampled history holds
/// one value per pre-horizon node, oldest first, and must have exactly
/// `d_k + 1` entries for the grid it is used with.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Constant(DVector<f64>),
    Sampled(Vec<DVector<f64>>),
}

impl History {
    /// State dimension of the stored values.
    pub fn dim(&self) -> usize {
        match self {
            History::Constant(v) => v.len(),
            History::Sampled(vs) => vs[0].len(),
        }
    }

    /// Initial state, i.e. the history value at offset zero.
    pub fn initial_state(&self) -> &DVector<f64> {
        match self {
            History::Constant(v) => v,
            History::Sampled(vs) => vs.last().expect("sampled history is non-empty"),
        }
    }

    /// History value at a non-positive node offset from `t0`.
    ///
    /// `back` counts nodes before the horizon start: `back = 0` is `t0`
    /// itself, `back = d_k` is the oldest covered node.
    pub fn value_at(&self, back: usize) -> &DVector<f64> {
        match self {
            History::Constant(v) => v,
            History::Sampled(vs) => {
                let idx = vs
                    .len()
                    .checked_sub(1 + back)
                    .expect("history does not reach that far back");
                &vs[idx]
            }
        }
    }

    /// Checks that this history covers every delayed lookup on `grid`.
    pub fn covers(&self, grid: &Grid) -> bool {
        match self {
            History::Constant(_) => true,
            History::Sampled(vs) => vs.len() == grid.max_delay_steps() + 1,
        }
    }
}

/// Value of delay slot `slot` at `node`: the trajectory value `d_slot`
/// nodes earlier, or the history value when the lookup reaches before the
/// horizon. Slot 0 is the current state.
pub fn delayed_state<'a>(
    traj: &'a Trajectory,
    history: &'a History,
    node: usize,
    slot: usize,
) -> &'a DVector<f64> {
    let offset = traj.grid().slot_offset(slot);
    if node >= offset {
        traj.node(node - offset)
    } else {
        history.value_at(offset - node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use nalgebra::dvector;

    fn grid_with_delay() -> Grid {
        // dt = 0.1, delay of 50 nodes
        build_grid(0.0, 10.0, 100, &[5.0]).unwrap()
    }

    #[test]
    fn slot_zero_is_identity_lookup() {
        let grid = grid_with_delay();
        let mut traj = Trajectory::zeros(&grid, 1);
        traj.set_node(0, dvector![42.0]);
        let history = History::Constant(dvector![42.0]);
        assert_eq!(delayed_state(&traj, &history, 0, 0), &dvector![42.0]);
    }

    #[test]
    fn pre_horizon_lookup_reads_constant_history() {
        let grid = grid_with_delay();
        let traj = Trajectory::zeros(&grid, 1);
        let history = History::Constant(dvector![7.5]);
        // node 10 minus 50 steps reaches 40 nodes before t0
        assert_eq!(delayed_state(&traj, &history, 10, 1), &dvector![7.5]);
    }

    #[test]
    fn in_horizon_delayed_lookup_is_index_arithmetic() {
        let grid = grid_with_delay();
        let mut traj = Trajectory::zeros(&grid, 1);
        traj.set_node(10, dvector![3.25]);
        let history = History::Constant(dvector![0.0]);
        assert_eq!(delayed_state(&traj, &history, 60, 1), &dvector![3.25]);
    }

    #[test]
    fn sampled_history_indexing() {
        let grid = grid_with_delay();
        let values: Vec<_> = (0..=50).map(|i| dvector![i as f64]).collect();
        let history = History::Sampled(values);
        assert!(history.covers(&grid));
        assert_eq!(history.initial_state(), &dvector![50.0]);
        assert_eq!(history.value_at(0), &dvector![50.0]);
        assert_eq!(history.value_at(50), &dvector![0.0]);

        let traj = Trajectory::zeros(&grid, 1);
        // node 20, delay 50 -> 30 nodes before t0 -> sample index 20
        assert_eq!(delayed_state(&traj, &history, 20, 1), &dvector![20.0]);
    }

    #[test]
    fn l2_diff_uses_left_rectangle_rule() {
        let grid = build_grid(0.0, 1.0, 4, &[]).unwrap();
        let a = Trajectory::constant(&grid, dvector![1.0]);
        let mut b = Trajectory::constant(&grid, dvector![1.0]);
        // only the final node differs; it carries no interval
        b.set_node(4, dvector![100.0]);
        assert_eq!(a.l2_sq_diff(&b), 0.0);
        let c = Trajectory::constant(&grid, dvector![0.0]);
        assert!((a.l2_sq_diff(&c) - 1.0).abs() < 1e-15);
    }
}
