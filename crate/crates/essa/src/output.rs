//! CSV and summary emission. Headers are part of the tool's contract
//! and numbers are printed in scientific notation at a fixed number of
//! significant digits, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use essa_core::{IterationRecord, Solution, Termination, Trajectory};

/// Scientific notation with `precision` significant digits.
pub fn fmt_num(x: f64, precision: usize) -> String {
    format!("{:.*e}", precision.saturating_sub(1), x)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn trajectory_csv(names: &[String], traj: &Trajectory, precision: usize) -> String {
    let grid = traj.grid();
    let mut out = String::with_capacity((grid.num_nodes() + 1) * 24 * (names.len() + 1));
    out.push('t');
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for j in 0..grid.num_nodes() {
        out.push_str(&fmt_num(grid.node_time(j), precision));
        let value = traj.node(j);
        for i in 0..value.len() {
            out.push(',');
            out.push_str(&fmt_num(value[i], precision));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectories(
    path: &Path,
    names: &[String],
    state: &Trajectory,
    precision: usize,
) -> Result<()> {
    write_file(path, &trajectory_csv(names, state, precision))
}

pub fn write_controls(
    path: &Path,
    names: &[String],
    control: &Trajectory,
    precision: usize,
) -> Result<()> {
    write_file(path, &trajectory_csv(names, control, precision))
}

pub fn write_iterations(
    path: &Path,
    records: &[IterationRecord],
    precision: usize,
) -> Result<()> {
    let mut out = String::from("i,J,delta_u_sq,eps_min,c_increases,accepted,residual\n");
    for rec in records {
        let residual = match rec.residual {
            Some(r) => fmt_num(r, precision),
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            rec.index,
            fmt_num(rec.cost, precision),
            fmt_num(rec.delta_u_sq, precision),
            fmt_num(rec.eps_min, precision),
            rec.c_increases,
            rec.accepted,
            residual
        );
    }
    write_file(path, &out)
}

pub fn write_summary(
    path: &Path,
    solution: &Solution,
    wall_seconds: f64,
    precision: usize,
) -> Result<()> {
    let termination = match solution.termination {
        Termination::ToleranceMet => "tolerance met",
        Termination::MaxIters => "iteration limit reached",
        Termination::CIncreaseCap => "regularization growth cap reached",
    };
    let out = format!(
        "termination: {termination}\nsweep records: {}\nfinal cost: {}\n\
         optimality residual: {}\nwall time seconds: {:.3}\n",
        solution.log.len(),
        fmt_num(solution.cost, precision),
        fmt_num(solution.residual, precision),
        wall_seconds
    );
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, 12345.6789, -2.7e-11] {
            let s = fmt_num(x, 17);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn header_bytes_are_fixed() {
        let grid = essa_core::build_grid(0.0, 1.0, 2, &[]).unwrap();
        let traj = Trajectory::zeros(&grid, 2);
        let names = vec!["S".to_string(), "I".to_string()];
        let csv = trajectory_csv(&names, &traj, 17);
        assert!(csv.starts_with("t,S,I\n"), "{csv}");
        assert_eq!(csv.lines().count(), 4);
    }
}
