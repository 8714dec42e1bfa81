//! Python bindings. Results that already have a JSON form are handed
//! over as plain dicts.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use vidlaw::dynamics::{builtin_system_with, integrate_ode, TrajectorySeries, SYSTEM_NAMES};
use vidlaw::evaluate::{r2_trajectory, rmse as rmse_series, vps as vps_series};
use vidlaw::regress::{evaluate_rhs, stlsq_matrix};
use vidlaw_cli::CliConfig;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(format!("{e:#}"))
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(format!("{e:#}"))
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config(path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<CliConfig> {
    vidlaw_cli::resolve(path.as_deref(), &overrides).map_err(value_err)
}

fn series(rows: Vec<Vec<f64>>, dt: f64) -> PyResult<TrajectorySeries> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    TrajectorySeries::uniform(0.0, dt, dim, rows.concat()).map_err(value_err)
}

fn rows(s: &TrajectorySeries) -> Vec<Vec<f64>> {
    s.rows().map(<[f64]>::to_vec).collect()
}

/// Names of the built-in systems.
#[pyfunction]
fn systems() -> Vec<&'static str> {
    SYSTEM_NAMES.to_vec()
}

/// Resolved configuration as a dict (defaults, then file, then overrides).
#[pyfunction]
#[pyo3(signature = (path=None, overrides=Vec::new()))]
fn resolve_config<'py>(py: Python<'py>, path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &config(path, overrides)?)
}

/// Integrates an ODE system; returns `(times, states)`.
#[pyfunction]
#[pyo3(signature = (system, steps, z0=None, dt=None))]
fn integrate(system: &str, steps: usize, z0: Option<Vec<f64>>, dt: Option<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let spec = builtin_system_with(system, &Default::default()).map_err(value_err)?;
    let z0 = z0.unwrap_or_else(|| spec.default_z0.clone());
    let traj = integrate_ode(&spec, &z0, dt.unwrap_or(spec.recommended_dt), steps).map_err(value_err)?;
    Ok((traj.times().to_vec(), rows(&traj)))
}

/// Renders a system to a sequence file plus its truth CSV.
#[pyfunction]
#[pyo3(signature = (out, overrides=Vec::new(), config_path=None))]
fn generate<'py>(
    py: Python<'py>,
    out: PathBuf,
    overrides: Vec<String>,
    config_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_path, overrides)?;
    let g = py.detach(|| vidlaw_cli::generate(&cfg, &out)).map_err(runtime_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("sequence", g.sequence)?;
    d.set_item("truth", g.truth)?;
    d.set_item("frames", g.frames)?;
    d.set_item("equations", g.equations)?;
    Ok(d.into_any())
}

/// Runs discovery on a sequence file; returns the final summary.
#[pyfunction]
#[pyo3(signature = (input, run_dir, overrides=Vec::new(), config_path=None))]
fn discover<'py>(
    py: Python<'py>,
    input: PathBuf,
    run_dir: PathBuf,
    overrides: Vec<String>,
    config_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_path, overrides)?;
    let outcome = py.detach(|| vidlaw_cli::discover(&input, &cfg, &run_dir)).map_err(runtime_err)?;
    to_py(py, &outcome.summary)
}

/// Scores a stored model against a truth CSV or field sequence.
#[pyfunction]
#[pyo3(signature = (model, truth, overrides=Vec::new(), config_path=None))]
fn evaluate<'py>(
    py: Python<'py>,
    model: PathBuf,
    truth: PathBuf,
    overrides: Vec<String>,
    config_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let path = config_path.or_else(|| vidlaw_cli::sibling_config(&model));
    let cfg = config(path, overrides)?;
    let report = py.detach(|| vidlaw_cli::evaluate_model(&model, &truth, &cfg, None::<&Path>)).map_err(runtime_err)?;
    to_py(py, &report)
}

/// Sequential thresholded least squares; returns the `F x d` coefficients.
#[pyfunction]
#[pyo3(signature = (theta, dz, lambda_sp, max_iter=10))]
fn stlsq(theta: Vec<Vec<f64>>, dz: Vec<Vec<f64>>, lambda_sp: f64, max_iter: usize) -> PyResult<Vec<Vec<f64>>> {
    let to_mat = |r: &[Vec<f64>]| {
        let cols = r.first().map_or(0, Vec::len);
        if r.iter().any(|x| x.len() != cols) {
            return Err(PyValueError::new_err("ragged matrix"));
        }
        Ok(nalgebra::DMatrix::from_fn(r.len(), cols, |i, j| r[i][j]))
    };
    let fit = stlsq_matrix(&to_mat(&theta)?, &to_mat(&dz)?, lambda_sp, max_iter).map_err(value_err)?;
    Ok(fit.xi.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Extrapolation R² between two trajectories (rows are time steps).
#[pyfunction]
fn r2(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    r2_trajectory(&series(pred, 1.0)?, &series(truth, 1.0)?).map_err(value_err)
}

#[pyfunction]
fn rmse(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(rmse_series(&series(pred, 1.0)?, &series(truth, 1.0)?).map_err(value_err)?.value)
}

/// Valid prediction steps at tolerance `eps`.
#[pyfunction]
#[pyo3(signature = (pred, truth, eps=0.1))]
fn vps(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>, eps: f64) -> PyResult<usize> {
    vps_series(&series(pred, 1.0)?, &series(truth, 1.0)?, eps).map_err(value_err)
}

/// A discovered sparse model loaded from `model.json`.
#[pyclass(name = "SparseModel", frozen)]
struct PySparseModel(vidlaw::regress::SparseModel);

#[pymethods]
impl PySparseModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(value_err)?;
        Self::from_json(&text)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        vidlaw::regress::SparseModel::from_json(text).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(runtime_err)
    }

    #[getter]
    fn state_names(&self) -> Vec<String> {
        self.0.state_names.clone()
    }

    #[pyo3(signature = (precision=4))]
    fn equations(&self, precision: usize) -> Vec<String> {
        self.0.to_symbolic(precision)
    }

    fn supports(&self) -> Vec<Vec<String>> {
        self.0.supports()
    }

    fn complexity(&self) -> usize {
        self.0.complexity()
    }

    /// Right-hand side at a state.
    fn rhs(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        evaluate_rhs(&self.0, &z).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("SparseModel({})", self.0.to_symbolic(4).join("; "))
    }
}

#[pymodule]
fn pyvidlaw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(systems, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(discover, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stlsq, m)?)?;
    m.add_function(wrap_pyfunction!(r2, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(vps, m)?)?;
    m.add_class::<PySparseModel>()?;
    Ok(())
}
