//! Python bindings: step an agent trial by trial, run recorded experiments,
//! evaluate snapshots and emit plots.

use std::path::PathBuf;

use cgrail_core::harness::{
    self, emit_plots as emit, metrics_files, ExperimentConfig, Figure, MetricsRow, RunSnapshot,
};
use cgrail_core::selection::softmax_probabilities;
use cgrail_core::world::forward_kinematics as fk;
use cgrail_core::{Arm, ContextKey, Error, GoalId, SceneConfig, Variant};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_)
        | Error::Contract(_)
        | Error::Schema(_)
        | Error::Format(_)
        | Error::Version { .. }
        | Error::UnknownGoal(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn load_config(config: Option<PathBuf>) -> PyResult<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::load(p).map_err(py_err),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(py_err)
}

fn row_dict<'py>(py: Python<'py>, r: &MetricsRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("trial", r.trial)?;
    d.set_item("goal", r.goal)?;
    d.set_item("context", r.context.clone())?;
    d.set_item("arm", &r.arm)?;
    d.set_item("mask", &r.mask)?;
    d.set_item("touch", &r.touch)?;
    d.set_item("success", r.success == 1)?;
    d.set_item("reward_sum", r.reward_sum)?;
    d.set_item("steps", r.steps)?;
    d.set_item("window_rate", r.window_rate)?;
    d.set_item("goal_window_rate", r.goal_window_rate)?;
    d.set_item("prior", r.prior)?;
    d.set_item("chi", r.chi)?;
    d.set_item("delta_c", r.delta_c)?;
    d.set_item("goal_value", r.goal_value)?;
    d.set_item("transfer", &r.transfer)?;
    d.set_item("transfer_source", r.transfer_source.clone())?;
    d.set_item("new_contexts", &r.new_contexts)?;
    d.set_item("new_goal", r.new_goal)?;
    d.set_item("feature_added", r.feature_added)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, report: &harness::EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("overall", report.overall())?;
    d.set_item("attempts", report.attempts)?;
    let per_goal = PyDict::new(py);
    for (g, rate) in report.per_goal() {
        per_goal.set_item(g.0, rate)?;
    }
    d.set_item("per_goal", per_goal)?;
    let cells = PyDict::new(py);
    for c in &report.cells {
        cells.set_item((c.goal.0, c.context.to_string()), (c.attempts, c.successes))?;
    }
    d.set_item("cells", cells)?;
    Ok(d)
}

/// A seeded agent in its world, advanced one trial at a time.
#[pyclass(module = "cgrail")]
struct Runner {
    inner: harness::Runner,
}

#[pymethods]
impl Runner {
    #[new]
    #[pyo3(signature = (variant = "c-grail", seed = 0, config = None))]
    fn new(variant: &str, seed: u64, config: Option<PathBuf>) -> PyResult<Self> {
        let mut cfg = load_config(config)?;
        cfg.variant = parse_variant(variant)?;
        Ok(Self {
            inner: harness::Runner::new(&cfg, seed).map_err(py_err)?,
        })
    }

    /// Runs one trial and returns its metrics as a dict.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let row = self.inner.step_row().map_err(py_err)?;
        row_dict(py, &row)
    }

    /// Runs `n` trials; returns the overall windowed success afterwards.
    fn run(&mut self, n: u64) -> PyResult<f64> {
        let mut rate = 0.0;
        for _ in 0..n {
            rate = self.inner.step_row().map_err(py_err)?.window_rate;
        }
        Ok(rate)
    }

    #[getter]
    fn trials(&self) -> u64 {
        self.inner.agent().trials()
    }

    #[getter]
    fn goals(&self) -> usize {
        self.inner.agent().goals().len()
    }

    /// Known context keys of a goal, in discovery order.
    fn contexts(&self, goal: usize) -> Vec<String> {
        self.inner
            .agent()
            .registry()
            .contexts(GoalId(goal))
            .map(|(k, _)| k.to_string())
            .collect()
    }

    fn useful_features(&self, goal: usize) -> Vec<usize> {
        self.inner
            .agent()
            .useful_features(GoalId(goal))
            .map(|u| u.slots().collect())
            .unwrap_or_default()
    }

    fn competence(&self, goal: usize, context: &str) -> PyResult<f64> {
        let key: ContextKey = context.parse().map_err(py_err)?;
        Ok(self.inner.agent().competence().predict(GoalId(goal), key))
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = self.inner.snapshot().to_bytes().map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    #[pyo3(signature = (n, seed = 0))]
    fn evaluate<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = harness::evaluate(&self.inner.snapshot(), n, &mut rng).map_err(py_err)?;
        report_dict(py, &report)
    }
}

/// Trains one seed and writes its metrics CSV and snapshot under `out`.
#[pyfunction]
#[pyo3(signature = (variant, seed, trials, out, config = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    variant: &str,
    seed: u64,
    trials: u64,
    out: PathBuf,
    config: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = load_config(config)?;
    cfg.variant = parse_variant(variant)?;
    cfg.trials = trials;
    let res = harness::run_experiment(&cfg, seed, &out).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("metrics", res.metrics)?;
    d.set_item("snapshot", res.snapshot)?;
    d.set_item("trials", res.trials)?;
    d.set_item("final_window_rate", res.final_window_rate)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (path, n, seed = 0))]
fn evaluate_snapshot<'py>(py: Python<'py>, path: PathBuf, n: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let snap = RunSnapshot::load(path).map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = harness::evaluate(&snap, n, &mut rng).map_err(py_err)?;
    report_dict(py, &report)
}

/// Writes plot data and SVGs for the metrics files in `input`.
#[pyfunction]
#[pyo3(signature = (input, fig = "all", out = None))]
fn emit_plots(input: PathBuf, fig: &str, out: Option<PathBuf>) -> PyResult<Vec<PathBuf>> {
    let figs: Vec<Figure> = if fig.eq_ignore_ascii_case("all") {
        Figure::ALL.to_vec()
    } else {
        vec![fig.parse().map_err(py_err)?]
    };
    let files = metrics_files(&input).map_err(py_err)?;
    let out = out.unwrap_or_else(|| input.join("plots"));
    let mut written = Vec::new();
    for f in figs {
        written.extend(emit(&files, &out, f).map_err(py_err)?);
    }
    Ok(written)
}

#[pyfunction]
fn softmax(values: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    softmax_probabilities(&values, temperature).map_err(py_err)
}

/// Effector position of an arm in the default scene.
#[pyfunction]
#[pyo3(signature = (joints, arm = "left"))]
fn forward_kinematics(joints: [f64; 4], arm: &str) -> PyResult<(f64, f64)> {
    let arm = match arm {
        "left" => Arm::Left,
        "right" => Arm::Right,
        other => return Err(PyValueError::new_err(format!("unknown arm `{other}`"))),
    };
    let p = fk(&joints, arm, &SceneConfig::default()).map_err(py_err)?;
    Ok((p.x, p.y))
}

#[pymodule]
fn cgrail(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Runner>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(emit_plots, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add("VARIANTS", Variant::ALL.map(|v| v.name()).to_vec())?;
    m.add("METRICS_SCHEMA", harness::METRICS_SCHEMA)?;
    Ok(())
}
