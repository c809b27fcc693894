//! Command line front end for the delayed optimal control solver:
//! `solve` runs the full sweep algorithm on a configured problem,
//! `check` cross-validates derivatives and reference solvers, and
//! `simulate` integrates the model under a user-supplied control.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn, LevelFilter};

use essa_core::{
    brute_force_lq, fd_check, integrate_forward, project, riccati_lq_reference, solve,
    DVector, Solution, Termination, Trajectory,
};

use config::{load_run, InitialControl, LoadedRun};

#[derive(Parser)]
#[command(name = "essa", about = "Optimal control of dynamics with discrete state delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write CSV results.
    Solve {
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate the configuration and print the resolved grid only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Cross-validate model derivatives and, for the LQ model, compare
    /// three independent solvers.
    Check { config: PathBuf },
    /// Integrate the model under a control read from a CSV file.
    Simulate {
        config: PathBuf,
        /// CSV file with one control row per grid node.
        #[arg(long)]
        control: PathBuf,
    },
}

fn init_logging() {
    let level = match std::env::var("ESSA_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("debug") => LevelFilter::Debug,
        Ok("info") | Err(_) => LevelFilter::Info,
        Ok(other) => {
            eprintln!("unrecognized ESSA_LOG value `{other}`, using info");
            LevelFilter::Info
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            log::error!("{err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { config, out, dry_run } => cmd_solve(&config, out, dry_run),
        Command::Check { config } => cmd_check(&config),
        Command::Simulate { config, control } => cmd_simulate(&config, &control),
    }
}

fn cmd_solve(config_path: &Path, out: Option<PathBuf>, dry_run: bool) -> Result<i32> {
    let mut run = load_run(config_path)?;
    if let Some(dir) = out {
        run.output.dir = dir;
    }

    if dry_run {
        let grid = &run.grid;
        println!("grid: {} steps on [{}, {}]", grid.num_steps(), grid.t0(), grid.t_final());
        println!("step: {}", grid.dt());
        println!("delay steps: {:?}", grid.delay_steps());
        println!("output directory: {}", run.output.dir.display());
        return Ok(0);
    }

    let u0 = match &run.initial_control {
        None => None,
        Some(InitialControl::Constant(v)) => Some(Trajectory::constant(&run.grid, v.clone())),
        Some(InitialControl::File(path)) => Some(read_control_csv(path, &run)?),
    };

    let started = Instant::now();
    let solution = solve(
        &run.problem,
        &run.control_set,
        &run.grid,
        &run.history,
        u0.as_ref(),
        &run.integrator,
        &run.solver,
        None,
    )?;
    let wall = started.elapsed().as_secs_f64();

    write_solution(&run, &solution, wall)?;
    info!(
        "terminated after {} iterations, final cost {:.6e}, residual {:.3e}",
        solution.log.len(),
        solution.cost,
        solution.residual
    );

    Ok(match solution.termination {
        Termination::ToleranceMet => 0,
        Termination::MaxIters | Termination::CIncreaseCap => 2,
    })
}

fn write_solution(run: &LoadedRun, solution: &Solution, wall: f64) -> Result<()> {
    let dir = &run.output.dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    let precision = run.output.precision;
    output::write_trajectories(
        &dir.join("trajectories.csv"),
        run.problem.state_names(),
        &solution.state,
        precision,
    )?;
    output::write_controls(
        &dir.join("controls.csv"),
        run.problem.control_names(),
        &solution.control,
        precision,
    )?;
    output::write_iterations(&dir.join("iterations.csv"), &solution.log, precision)?;
    output::write_summary(&dir.join("summary.txt"), solution, wall, precision)?;
    Ok(())
}

const FD_SAMPLES: usize = 100;
const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const CROSS_TOL: f64 = 1e-3;

fn cmd_check(config_path: &Path) -> Result<i32> {
    let run = load_run(config_path)?;
    let mut ok = true;

    let report = fd_check(&run.problem, FD_SAMPLES, FD_EPS);
    for (label, err) in report.blocks() {
        let verdict = if err <= FD_TOL { "ok" } else { "FAIL" };
        println!("derivative {label}: max relative error {:.3e} {verdict}", err);
        ok &= err <= FD_TOL;
    }

    if let Some((a, b, q, r)) = run.lq_coefficients {
        let brute =
            brute_force_lq(&run.problem, &run.grid, &run.history, &run.control_set, 1e-8)?;
        let solver_config = essa_core::SolverConfig {
            eta_tol: Some(1e-12),
            ..run.solver.clone()
        };
        let solution = solve(
            &run.problem,
            &run.control_set,
            &run.grid,
            &run.history,
            None,
            &run.integrator,
            &solver_config,
            None,
        )?;
        let x0 = run.history.initial_state()[0];
        let (_, riccati) = riccati_lq_reference(a, b, q, r, x0, &run.grid, 4);

        let pairs = [
            ("sweep vs brute force", solution.control.l2_sq_diff(&brute).sqrt()),
            ("sweep vs Riccati", solution.control.l2_sq_diff(&riccati).sqrt()),
            ("brute force vs Riccati", brute.l2_sq_diff(&riccati).sqrt()),
        ];
        for (label, gap) in pairs {
            let verdict = if gap <= CROSS_TOL { "ok" } else { "FAIL" };
            println!("agreement {label}: L2 gap {:.3e} {verdict}", gap);
            ok &= gap <= CROSS_TOL;
        }
    }

    Ok(if ok { 0 } else { 1 })
}

fn read_control_csv(path: &Path, run: &LoadedRun) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let m = run.problem.control_dim();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 1 {
            bail!(
                "{}:{}: expected {} comma-separated fields (t plus {m} controls), got {}",
                path.display(),
                lineno + 1,
                m + 1,
                fields.len()
            );
        }
        let mut value = DVector::zeros(m);
        for (i, field) in fields[1..].iter().enumerate() {
            value[i] = field.trim().parse::<f64>().with_context(|| {
                format!("{}:{}: `{field}` is not a number", path.display(), lineno + 1)
            })?;
        }
        rows.push(value);
    }

    let expected = run.grid.num_nodes();
    if rows.len() != expected {
        bail!(
            "control file has {} rows, the grid has {expected} nodes",
            rows.len()
        );
    }

    let mut projected = 0usize;
    let rows = rows
        .into_iter()
        .map(|v| {
            let p = project(&run.control_set, &v)?;
            if p != v {
                projected += 1;
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>, essa_core::ProjectionError>>()?;
    if projected > 0 {
        warn!("{projected} control nodes were outside the admissible set and were projected");
    }
    Ok(Trajectory::from_values(&run.grid, rows))
}

fn cmd_simulate(config_path: &Path, control_path: &Path) -> Result<i32> {
    let run = load_run(config_path)?;
    let control = read_control_csv(control_path, &run)?;
    let state = integrate_forward(
        &run.problem,
        &run.grid,
        &control,
        &run.history,
        &run.integrator,
    )?;

    let dir = &run.output.dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    output::write_trajectories(
        &dir.join("trajectories.csv"),
        run.problem.state_names(),
        &state,
        run.output.precision,
    )?;
    info!("trajectory written to {}", dir.join("trajectories.csv").display());
    Ok(0)
}
