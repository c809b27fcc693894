//! Run configuration: JSON schema, whole-file validation that reports
//! every offending key at once, and construction of the selected model.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::Value;

use essa_core::models::lq::lq_test_problem;
use essa_core::models::sidarthe_v::{sidarthe_v_control_set, sidarthe_v_problem, SidartheVParams};
use essa_core::models::sirv::{sirv_control_set, sirv_problem, SirvParams};
use essa_core::{
    build_grid, ControlSet, DVector, Grid, History, IntegratorSettings, ProblemDef,
    SolverConfig,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub parameters: Value,
    pub initial_state: Option<Vec<f64>>,
    pub history: Option<Vec<Vec<f64>>>,
    /// Nominal control: per-component constants, or a CSV file path
    /// (relative to the configuration file) in the controls.csv format.
    /// Omitted: the solver starts from the admissible box midpoint.
    pub initial_control: Option<Value>,
    /// Clamp negative state components to zero after every integration
    /// step. Off by default; meant for compartment models, where delayed
    /// outflow terms can push intermediate iterates below zero.
    #[serde(default)]
    pub nonneg_clip: bool,
}

/// Resolved nominal control for the first solver iteration.
pub enum InitialControl {
    Constant(DVector<f64>),
    File(PathBuf),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t0: f64,
    pub horizon: f64,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_precision() -> usize {
    17
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir(), precision: default_precision() }
    }
}

/// Everything a command needs to run: the problem, its admissible set,
/// grid, history, and enough metadata to label output columns.
pub struct LoadedRun {
    pub problem: ProblemDef,
    pub control_set: ControlSet,
    pub grid: Grid,
    pub history: History,
    pub solver: SolverConfig,
    pub output: OutputSection,
    pub initial_control: Option<InitialControl>,
    pub integrator: IntegratorSettings,
    /// Scalar coefficients (a, b, q, r) when the model is the LQ test
    /// problem, enabling the closed-form reference in `check`.
    pub lq_coefficients: Option<(f64, f64, f64, f64)>,
}

const TOP_KEYS: &[&str] = &["model", "grid", "solver", "output"];
const MODEL_KEYS: &[&str] =
    &["name", "parameters", "initial_state", "history", "initial_control", "nonneg_clip"];
const GRID_KEYS: &[&str] = &["t0", "horizon", "n"];
const SOLVER_KEYS: &[&str] = &[
    "c0_diag",
    "c_growth",
    "c_relax",
    "eta_tol",
    "max_outer_iters",
    "max_c_increases_per_iter",
    "residual_tol",
    "strict_residual",
    "j_lower_bound",
    "xi0",
    "inner",
];
const OUTPUT_KEYS: &[&str] = &["dir", "precision"];
const MODEL_NAMES: &[&str] = &["sirv", "sidarthe_v", "lq"];
const LQ_KEYS: &[&str] = &["a", "b", "q", "r", "u_lo", "u_hi"];

fn check_section(
    issues: &mut Vec<String>,
    value: &Value,
    section: &str,
    allowed: &[&str],
    required: &[&str],
) {
    let obj = match value.as_object() {
        Some(o) => o,
        None => {
            issues.push(format!("section `{section}` must be a JSON object"));
            return;
        }
    };
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            issues.push(format!("unknown key `{section}.{key}`"));
        }
    }
    for key in required {
        if !obj.contains_key(*key) {
            issues.push(format!("missing key `{section}.{key}`"));
        }
    }
}

/// Structural validation pass over the raw JSON, before any typed
/// deserialization, so one report covers every schema problem.
pub fn validate_schema(root: &Value) -> Vec<String> {
    let mut issues = Vec::new();
    let obj = match root.as_object() {
        Some(o) => o,
        None => return vec!["configuration must be a JSON object".to_string()],
    };
    for key in obj.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            issues.push(format!("unknown key `{key}`"));
        }
    }
    for key in ["model", "grid"] {
        if !obj.contains_key(key) {
            issues.push(format!("missing key `{key}`"));
        }
    }
    if let Some(model) = obj.get("model") {
        check_section(&mut issues, model, "model", MODEL_KEYS, &["name"]);
        if let Some(name) = model.get("name").and_then(Value::as_str) {
            if !MODEL_NAMES.contains(&name) {
                issues.push(format!(
                    "unknown model `{name}` (expected one of {})",
                    MODEL_NAMES.join(", ")
                ));
            }
        }
    }
    if let Some(grid) = obj.get("grid") {
        check_section(&mut issues, grid, "grid", GRID_KEYS, GRID_KEYS);
    }
    if let Some(solver) = obj.get("solver") {
        check_section(&mut issues, solver, "solver", SOLVER_KEYS, &[]);
    }
    if let Some(output) = obj.get("output") {
        check_section(&mut issues, output, "output", OUTPUT_KEYS, &[]);
    }
    issues
}

fn lq_coefficient(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| anyhow!("model.parameters.{key} must be a finite number")),
    }
}

struct BuiltModel {
    problem: ProblemDef,
    control_set: ControlSet,
    delays: Vec<f64>,
    default_initial_state: Option<DVector<f64>>,
    lq_coefficients: Option<(f64, f64, f64, f64)>,
}

fn build_model(section: &ModelSection) -> Result<BuiltModel> {
    match section.name.as_str() {
        "sirv" => {
            let params = SirvParams::from_json(&section.parameters)?;
            Ok(BuiltModel {
                problem: sirv_problem(&params)?,
                control_set: sirv_control_set(&params),
                delays: params.delays(),
                default_initial_state: Some(SirvParams::benchmark_initial_state()),
                lq_coefficients: None,
            })
        }
        "sidarthe_v" => {
            let params = SidartheVParams::from_json(&section.parameters)?;
            Ok(BuiltModel {
                problem: sidarthe_v_problem(&params)?,
                control_set: sidarthe_v_control_set(&params),
                delays: params.delays(),
                default_initial_state: None,
                lq_coefficients: None,
            })
        }
        "lq" => {
            if let Some(obj) = section.parameters.as_object() {
                let unknown: Vec<String> = obj
                    .keys()
                    .filter(|k| !LQ_KEYS.contains(&k.as_str()))
                    .map(|k| format!("model.parameters.{k}"))
                    .collect();
                if !unknown.is_empty() {
                    bail!("unknown keys: {}", unknown.join(", "));
                }
            } else if !section.parameters.is_null() {
                bail!("model.parameters must be a JSON object");
            }
            let p = &section.parameters;
            let a = lq_coefficient(p, "a", 0.0)?;
            let b = lq_coefficient(p, "b", 1.0)?;
            let q = lq_coefficient(p, "q", 1.0)?;
            let r = lq_coefficient(p, "r", 1.0)?;
            let u_lo = lq_coefficient(p, "u_lo", -10.0)?;
            let u_hi = lq_coefficient(p, "u_hi", 10.0)?;
            let lq = lq_test_problem(a, b, q, r, u_lo, u_hi)?;
            Ok(BuiltModel {
                problem: lq.problem,
                control_set: lq.control_set,
                delays: Vec::new(),
                default_initial_state: Some(DVector::from_element(1, 1.0)),
                lq_coefficients: Some((a, b, q, r)),
            })
        }
        other => bail!("unknown model `{other}`"),
    }
}

/// Parses, validates, and assembles a run from a configuration file.
/// Schema problems are collected into a single multi-line error.
pub fn load_run(path: &std::path::Path) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let root: Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))?;

    let issues = validate_schema(&root);
    if !issues.is_empty() {
        bail!("invalid configuration:\n  {}", issues.join("\n  "));
    }

    let config: ConfigFile = serde_json::from_value(root)?;
    let built = build_model(&config.model)?;
    config.solver.validate().map_err(|e| anyhow!("invalid solver settings: {e}"))?;
    config
        .solver
        .c0_diag
        .resolve(built.problem.control_dim())
        .map_err(|e| anyhow!("invalid solver settings: {e}"))?;

    let grid = build_grid(
        config.grid.t0,
        config.grid.t0 + config.grid.horizon,
        config.grid.n,
        &built.delays,
    )?;

    let n = built.problem.state_dim();
    let initial_state = match &config.model.initial_state {
        Some(values) => {
            if values.len() != n {
                bail!(
                    "model.initial_state has {} entries, the model has {n} states",
                    values.len()
                );
            }
            DVector::from_vec(values.clone())
        }
        None => built.default_initial_state.clone().ok_or_else(|| {
            anyhow!("model.initial_state is required for `{}`", config.model.name)
        })?,
    };

    let history = match &config.model.history {
        None => History::Constant(initial_state),
        Some(rows) => {
            let needed = grid.max_delay_steps() + 1;
            if rows.len() != needed {
                bail!(
                    "model.history has {} rows, the grid needs {needed} \
                     (one per node back to the longest delay)",
                    rows.len()
                );
            }
            let mut values = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    bail!("model.history row {i} has {} entries, expected {n}", row.len());
                }
                values.push(DVector::from_vec(row.clone()));
            }
            if let Some(last) = values.last() {
                if config.model.initial_state.is_some() && *last != initial_state {
                    bail!(
                        "model.history's final row must equal model.initial_state \
                         (both describe the state at t0)"
                    );
                }
            }
            History::Sampled(values)
        }
    };

    let m = built.problem.control_dim();
    let initial_control = match &config.model.initial_control {
        None => None,
        Some(Value::Array(items)) => {
            if items.len() != m {
                bail!(
                    "model.initial_control has {} entries, the model has {m} controls",
                    items.len()
                );
            }
            let mut v = DVector::zeros(m);
            for (i, item) in items.iter().enumerate() {
                v[i] = item.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    anyhow!("model.initial_control[{i}] must be a finite number")
                })?;
            }
            Some(InitialControl::Constant(v))
        }
        Some(Value::String(name)) => {
            let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
            Some(InitialControl::File(base.join(name)))
        }
        Some(_) => bail!(
            "model.initial_control must be an array of per-component constants \
             or a CSV file path"
        ),
    };

    let integrator = IntegratorSettings {
        nonneg_clip: config.model.nonneg_clip,
        ..IntegratorSettings::default()
    };

    Ok(LoadedRun {
        problem: built.problem,
        control_set: built.control_set,
        grid,
        history,
        solver: config.solver,
        output: config.output,
        initial_control,
        integrator,
        lq_coefficients: built.lq_coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_issues_are_all_reported() {
        let root: Value = serde_json::from_str(
            r#"{
                "model": {"nam": "sirv"},
                "grid": {"t0": 0.0},
                "solver": {"c0_diag": 1.0, "growth": 2.0},
                "extra": 1
            }"#,
        )
        .unwrap();
        let issues = validate_schema(&root);
        let text = issues.join("\n");
        assert!(text.contains("unknown key `model.nam`"), "{text}");
        assert!(text.contains("missing key `model.name`"), "{text}");
        assert!(text.contains("missing key `grid.horizon`"), "{text}");
        assert!(text.contains("missing key `grid.n`"), "{text}");
        assert!(text.contains("unknown key `solver.growth`"), "{text}");
        assert!(text.contains("unknown key `extra`"), "{text}");
    }

    #[test]
    fn clean_schema_passes() {
        let root: Value = serde_json::from_str(
            r#"{
                "model": {"name": "lq"},
                "grid": {"t0": 0.0, "horizon": 1.0, "n": 100}
            }"#,
        )
        .unwrap();
        assert!(validate_schema(&root).is_empty());
    }
}
