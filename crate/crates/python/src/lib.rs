//! Python bindings: model, simulation, estimators, quadrature constants and experiments.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fbm_dslt::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use fbm_dslt::model::ChaosKernelSpec;
use fbm_dslt::sim::{FbmPath, GridSpec, Method, Sampler};
use fbm_dslt::{dslt, math, quadrature, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// fBm with Hurst index `hurst` on `[0, horizon]`.
#[pyclass(frozen, skip_from_py_object, name = "HurstModel")]
#[derive(Clone, Copy)]
struct PyHurstModel {
    inner: fbm_dslt::model::HurstModel,
}

#[pymethods]
impl PyHurstModel {
    #[new]
    #[pyo3(signature = (hurst, horizon = 1.0))]
    fn new(hurst: f64, horizon: f64) -> PyResult<Self> {
        Ok(Self { inner: fbm_dslt::model::HurstModel::new(hurst, horizon).map_err(to_py)? })
    }

    #[getter]
    fn hurst(&self) -> f64 {
        self.inner.hurst()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn covariance(&self, t: f64, s: f64) -> PyResult<f64> {
        self.inner.covariance(t, s).map_err(to_py)
    }

    /// Cross covariance of the increments over `[x, x+u1]`-type configurations.
    fn mu(&self, x: f64, u1: f64, u2: f64) -> PyResult<f64> {
        self.inner.mu(x, u1, u2).map_err(to_py)
    }

    fn regime(&self, q: u32) -> PyResult<String> {
        Ok(format!("{:?}", self.inner.regime(q).map_err(to_py)?))
    }

    fn __repr__(&self) -> String {
        format!("HurstModel(hurst={}, horizon={})", self.inner.hurst(), self.inner.horizon())
    }
}

fn path(model: &PyHurstModel, values: Vec<f64>) -> PyResult<FbmPath> {
    let n = values.len().checked_sub(1).ok_or_else(|| PyValueError::new_err("empty path"))?;
    let grid = GridSpec::new(n, model.inner.horizon()).map_err(to_py)?;
    FbmPath::from_values(model.inner, grid, values).map_err(to_py)
}

/// `n_paths` paths of `steps + 1` values each, starting at 0.
#[pyfunction]
#[pyo3(signature = (model, steps, n_paths, seed, method_name = "circulant"))]
fn simulate(
    py: Python<'_>,
    model: &PyHurstModel,
    steps: usize,
    n_paths: usize,
    seed: u64,
    method_name: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let grid = GridSpec::new(steps, model.inner.horizon()).map_err(to_py)?;
    let sampler = Sampler::new(&model.inner, &grid, method(method_name)?).map_err(to_py)?;
    Ok(py.detach(|| sampler.map_paths(seed, n_paths, |p| p.values.clone())))
}

/// `(raw, scaled)` value of `α_ε` on a path given by its values on a uniform grid.
#[pyfunction]
fn alpha_eps(model: &PyHurstModel, values: Vec<f64>, eps: f64) -> PyResult<(f64, f64)> {
    let est = dslt::alpha_eps(&path(model, values)?, eps).map_err(to_py)?;
    Ok((est.raw, est.scaled))
}

/// `(raw, scaled)` chaos component of order `2q - 1`.
#[pyfunction]
fn chaos_projection(model: &PyHurstModel, values: Vec<f64>, eps: f64, q: u32) -> PyResult<(f64, f64)> {
    let spec = ChaosKernelSpec::new(q, eps, model.inner).map_err(to_py)?;
    let est = dslt::chaos_projection(&path(model, values)?, &spec).map_err(to_py)?;
    Ok((est.raw, est.scaled))
}

#[pyfunction]
fn sigma_squared(model: &PyHurstModel) -> PyResult<f64> {
    quadrature::sigma_squared(&model.inner).map_err(to_py)
}

fn result_dict<'py>(py: Python<'py>, r: &fbm_dslt::integrate::QuadratureResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("abs_err_est", r.abs_err_est)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

#[pyfunction]
fn sigma_q_squared<'py>(py: Python<'py>, model: &PyHurstModel, q: u32) -> PyResult<Bound<'py, PyDict>> {
    let spec = ChaosKernelSpec::new(q, 1.0, model.inner).map_err(to_py)?;
    let r = py.detach(|| quadrature::sigma_q_squared(&spec)).map_err(to_py)?;
    result_dict(py, &r)
}

#[pyfunction]
fn sigma_q_bar_squared<'py>(py: Python<'py>, model: &PyHurstModel, q: u32) -> PyResult<Bound<'py, PyDict>> {
    let spec = ChaosKernelSpec::new(q, 1.0, model.inner).map_err(to_py)?;
    let r = py.detach(|| quadrature::sigma_q_bar_squared(&spec)).map_err(to_py)?;
    result_dict(py, &r)
}

#[pyfunction]
fn exact_chaos_variance<'py>(py: Python<'py>, model: &PyHurstModel, eps: f64, q: u32) -> PyResult<Bound<'py, PyDict>> {
    let spec = ChaosKernelSpec::new(q, eps, model.inner).map_err(to_py)?;
    let r = py.detach(|| quadrature::exact_chaos_variance(&spec)).map_err(to_py)?;
    result_dict(py, &r)
}

/// Dict with keys `v1`, `v2`, `v3` and `total`.
#[pyfunction]
fn exact_alpha_variance<'py>(py: Python<'py>, model: &PyHurstModel, eps: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = model.inner;
    let v = py.detach(|| quadrature::exact_alpha_variance(&m, eps)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("v1", result_dict(py, &v.v1)?)?;
    d.set_item("v2", result_dict(py, &v.v2)?)?;
    d.set_item("v3", result_dict(py, &v.v3)?)?;
    d.set_item("total", result_dict(py, &v.total)?)?;
    Ok(d)
}

/// `∫_0^∞ x^alpha (1 + c x^beta)^gamma dx` in closed form.
#[pyfunction]
fn lemma_beta_integral(c: f64, beta: f64, alpha: f64, gamma: f64) -> PyResult<f64> {
    math::lemma_beta_integral(c, beta, alpha, gamma).map_err(to_py)
}

/// Default configuration of an experiment, as JSON.
#[pyfunction]
fn experiment_config(kind: &str, hurst: f64) -> PyResult<String> {
    let kind: ExperimentKind = kind.parse().map_err(to_py)?;
    let cfg = ExperimentConfig::new(kind, hurst).map_err(to_py)?;
    serde_json::to_string(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs an experiment from a JSON configuration and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, workers = None))]
fn experiment(py: Python<'_>, config_json: &str, workers: Option<usize>) -> PyResult<String> {
    let cfg: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(|| run_experiment(&cfg, workers)).map_err(to_py)?;
    report.to_json().map_err(to_py)
}

#[pymodule]
fn fbm_dslt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHurstModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_eps, m)?)?;
    m.add_function(wrap_pyfunction!(chaos_projection, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_squared, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_q_squared, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_q_bar_squared, m)?)?;
    m.add_function(wrap_pyfunction!(exact_chaos_variance, m)?)?;
    m.add_function(wrap_pyfunction!(exact_alpha_variance, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_beta_integral, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_config, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
