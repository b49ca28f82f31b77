//! Python bindings for the `hyperwave` core crate.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::json;

use hyperwave as hw;

fn to_py(e: hw::Error) -> PyErr {
    match e {
        hw::Error::NonFinite { .. } | hw::Error::TooManyFailures { .. } | hw::Error::InsufficientPoints { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn loads<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

#[pyclass(name = "ModeGrid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModeGrid {
    inner: Arc<hw::ModeGrid>,
}

#[pymethods]
impl PyModeGrid {
    #[new]
    #[pyo3(signature = (cutoff, wave_speed = 1.0))]
    fn new(cutoff: usize, wave_speed: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(hw::ModeGrid::new(cutoff, wave_speed).map_err(to_py)?),
        })
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    #[getter]
    fn wave_speed(&self) -> f64 {
        self.inner.wave_speed()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    fn norm_scalar(&self, coeffs: Vec<f64>, r: f64) -> PyResult<f64> {
        hw::norm_scalar(&coeffs, r, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ModeGrid(cutoff={}, wave_speed={})", self.inner.cutoff(), self.inner.wave_speed())
    }
}

#[pyclass(name = "PairState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPairState {
    inner: hw::PairState,
}

#[pymethods]
impl PyPairState {
    #[new]
    fn new(grid: &PyModeGrid, pos: Vec<f64>, vel: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: hw::PairState::new(grid.inner.clone(), pos, vel).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn zeros(grid: &PyModeGrid) -> Self {
        Self {
            inner: hw::PairState::zeros(grid.inner.clone()),
        }
    }

    #[getter]
    fn pos(&self) -> Vec<f64> {
        self.inner.pos().to_vec()
    }

    #[getter]
    fn vel(&self) -> Vec<f64> {
        self.inner.vel().to_vec()
    }

    #[getter]
    fn grid(&self) -> PyModeGrid {
        PyModeGrid {
            inner: self.inner.grid().clone(),
        }
    }

    fn norm(&self, r: f64) -> f64 {
        self.inner.norm_pair(r)
    }

    fn lambda_power(&self, s: f64) -> Self {
        Self {
            inner: self.inner.apply_lambda_power(s),
        }
    }

    fn project(&self, modes: Vec<usize>) -> PyResult<Self> {
        let set = hw::ModeSet::new(modes).map_err(to_py)?;
        Ok(Self {
            inner: self.inner.project(&set).map_err(to_py)?,
        })
    }

    fn propagate(&self, t: f64) -> Self {
        Self {
            inner: hw::propagate(&self.inner, t),
        }
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.sub(&other.inner).map_err(to_py)?,
        })
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.add(&other.inner).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("PairState(cutoff={}, norm0={})", self.inner.grid().cutoff(), self.inner.norm_pair(0.0))
    }
}

#[pyfunction]
fn lambda_diff_opnorm(grid: &PyModeGrid, alpha: f64, t: f64) -> PyResult<f64> {
    hw::lambda_diff_opnorm(alpha, t, &grid.inner).map_err(to_py)
}

#[pyfunction]
fn scalar_sup(alpha: f64) -> PyResult<f64> {
    hw::scalar_sup(alpha).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (v, g, out_cutoff = None))]
fn sine_expand_product(v: Vec<f64>, g: Vec<f64>, out_cutoff: Option<usize>) -> Vec<f64> {
    let n = out_cutoff.unwrap_or(v.len());
    hw::sine_expand_product(&v, &g, n)
}

#[pyfunction]
#[pyo3(signature = (v, g, out_cutoff = None, dealias_factor = 2.0))]
fn fast_multiply(v: Vec<f64>, g: Vec<f64>, out_cutoff: Option<usize>, dealias_factor: f64) -> PyResult<Vec<f64>> {
    let n = out_cutoff.unwrap_or(v.len());
    hw::fast_multiply(&v, &g, n, dealias_factor).map_err(to_py)
}

#[pyfunction]
fn schatten_norm(rows: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    let op = hw::DenseOperator::new(r, c, rows.concat()).map_err(to_py)?;
    hw::schatten_norm(&op, p).map_err(to_py)
}

#[pyfunction]
fn check_schatten_hoelder(dim: usize, r: f64, trials: usize, seed: u64) -> PyResult<f64> {
    hw::check_schatten_hoelder(dim, r, trials, seed).map_err(to_py)
}

#[pyfunction]
fn multiplier_hs_norm(m: Vec<f64>, r: f64, n: usize) -> PyResult<f64> {
    hw::multiplier_hs_norm(&m, r, n).map_err(to_py)
}

#[pyfunction]
fn fit_rate(step_sizes: Vec<f64>, errors: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = hw::fit_rate(&step_sizes, &errors).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.r_squared))
}

/// Default experiment configuration as a JSON string.
#[pyfunction]
fn default_config() -> String {
    hw::ExperimentConfig::default().to_json()
}

fn parse_config(text: &str) -> PyResult<hw::ExperimentConfig> {
    hw::ExperimentConfig::from_json(text).map_err(to_py)
}

/// Final state of one path at the finest configured step count.
#[pyfunction]
#[pyo3(signature = (config, path = 0))]
fn simulate_path(py: Python<'_>, config: &str, path: u64) -> PyResult<PyPairState> {
    let cfg = parse_config(config)?;
    let finest = *cfg.steps.last().expect("validated");
    let y = py
        .detach(|| {
            let sim = cfg.sim_config()?.with_steps(finest)?;
            hw::simulate_path(&sim, path, cfg.seed)
        })
        .map_err(to_py)?;
    Ok(PyPairState { inner: y })
}

fn rate_json(r: &hw::RateReport, hash: String) -> serde_json::Value {
    json!({
        "step_sizes": r.step_sizes,
        "errors": r.errors,
        "std_errors": r.std_errors,
        "fitted": r.fitted,
        "slope": r.fit.map(|f| f.slope),
        "intercept": r.fit.map(|f| f.intercept),
        "r_squared": r.fit.map(|f| f.r_squared),
        "failed_paths": r.failed_paths,
        "config_hash": hash,
    })
}

#[pyfunction]
fn strong_error_sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let report = py
        .detach(|| hw::strong_error_sweep(&cfg.sim_config()?, &cfg.sweep_spec()))
        .map_err(to_py)?;
    loads(py, &rate_json(&report, cfg.hash()))
}

#[pyfunction]
#[pyo3(signature = (config, coupled = true))]
fn weak_error_sweep<'py>(py: Python<'py>, config: &str, coupled: bool) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let report = py
        .detach(|| {
            let sim = cfg.sim_config()?;
            let phi = cfg.functional(sim.grid.clone());
            hw::weak_error_sweep(&sim, &phi, &cfg.sweep_spec(), coupled)
        })
        .map_err(to_py)?;
    loads(py, &rate_json(&report, cfg.hash()))
}

#[pyfunction]
fn galerkin_sweep<'py>(py: Python<'py>, config: &str, cutoffs: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let finest = *cfg.steps.last().expect("validated");
    let report = py
        .detach(|| {
            let sim = cfg.sim_config()?.with_steps(finest)?;
            hw::galerkin_sweep(&sim, &cutoffs, cfg.paths, cfg.seed, cfg.threads)
        })
        .map_err(to_py)?;
    let value = json!({
        "cutoffs": report.cutoffs,
        "errors": report.errors,
        "std_errors": report.std_errors,
        "strictly_decreasing": report.strictly_decreasing(),
        "failed_paths": report.failed_paths,
        "config_hash": cfg.hash(),
    });
    loads(py, &value)
}

/// Operator inequality suite; returns the report as a dict.
#[pyfunction]
fn property_suite<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| hw::props::run_property_suite(seed)).map_err(to_py)?;
    let mut value = serde_json::to_value(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value["pass"] = serde_json::Value::Bool(report.passed());
    loads(py, &value)
}

#[pymodule]
fn hyperwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModeGrid>()?;
    m.add_class::<PyPairState>()?;
    m.add_function(wrap_pyfunction!(lambda_diff_opnorm, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_sup, m)?)?;
    m.add_function(wrap_pyfunction!(sine_expand_product, m)?)?;
    m.add_function(wrap_pyfunction!(fast_multiply, m)?)?;
    m.add_function(wrap_pyfunction!(schatten_norm, m)?)?;
    m.add_function(wrap_pyfunction!(check_schatten_hoelder, m)?)?;
    m.add_function(wrap_pyfunction!(multiplier_hs_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_path, m)?)?;
    m.add_function(wrap_pyfunction!(strong_error_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(weak_error_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(galerkin_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(property_suite, m)?)?;
    Ok(())
}
