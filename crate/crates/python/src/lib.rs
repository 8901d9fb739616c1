//! Python bindings for the frontier-lab core.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use frontier_lab::factor_bias::{self, CancellationParams, ConfounderModel, ConfounderNormalization, TwoAssetStructure};
use frontier_lab::frontier::{self, FrontierPoint};
use frontier_lab::geometry::{self, SignalVector, SpdCovariance};
use frontier_lab::harness::{self, ExperimentConfig};
use frontier_lab::signals::{self, WeightPair};
use frontier_lab::stochastics::{RngStream, SamplePanel};
use frontier_lab::LabError;

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Io(_) | LabError::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn signal(values: Vec<f64>, label: &str) -> PyResult<SignalVector> {
    SignalVector::from_slice(&values, label).map_err(err)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn normalization(name: &str) -> PyResult<ConfounderNormalization> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown normalization {name:?}")))
}

/// Symmetric positive-definite covariance with its inverse.
#[pyclass(name = "Covariance", frozen)]
struct PyCovariance {
    inner: SpdCovariance,
}

#[pymethods]
impl PyCovariance {
    #[new]
    #[pyo3(signature = (rows, eigen_floor = SpdCovariance::DEFAULT_EIGEN_FLOOR))]
    fn new(rows: Vec<Vec<f64>>, eigen_floor: f64) -> PyResult<Self> {
        let inner = SpdCovariance::from_matrix(rows_to_matrix(&rows)?, eigen_floor).map_err(err)?;
        Ok(Self { inner })
    }

    /// Factor-model covariance drawn from `(seed, stream)`.
    #[staticmethod]
    #[pyo3(signature = (seed, n, n_factors = 3, idio_scale = 0.2, stream = 0))]
    fn random(seed: u64, n: usize, n_factors: usize, idio_scale: f64, stream: u64) -> PyResult<Self> {
        let inner = geometry::make_spd_cov(&RngStream::new(seed, stream), n, n_factors, idio_scale).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    fn inverse(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.inverse())
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("Covariance(dim={})", self.inner.dim())
    }
}

#[pyfunction]
#[pyo3(signature = (seed, n, scale = 0.25, stream = 1))]
fn generate_mu(seed: u64, n: usize, scale: f64, stream: u64) -> PyResult<Vec<f64>> {
    let mu = geometry::generate_mu(&RngStream::new(seed, stream), n, scale).map_err(err)?;
    Ok(mu.values.iter().copied().collect())
}

#[pyfunction]
fn cosine_alignment(mu: Vec<f64>, mu_tilde: Vec<f64>, cov: &PyCovariance) -> PyResult<f64> {
    geometry::cosine_alignment(&signal(mu, "mu")?, &signal(mu_tilde, "mu_tilde")?, &cov.inner).map_err(err)
}

#[pyfunction]
fn tangency_direction(signal_values: Vec<f64>, cov: &PyCovariance) -> PyResult<Vec<f64>> {
    let w = geometry::tangency_direction(&signal(signal_values, "signal")?, &cov.inner).map_err(err)?;
    Ok(w.iter().copied().collect())
}

/// `(mean, volatility, sharpe)` of weights under `mu`.
#[pyfunction]
fn portfolio_stats(weights: Vec<f64>, mu: Vec<f64>, cov: &PyCovariance) -> PyResult<(f64, f64, f64)> {
    let s = geometry::sharpe_of_weights(&DVector::from_vec(weights), &signal(mu, "mu")?, &cov.inner).map_err(err)?;
    Ok((s.mean, s.vol, s.sharpe))
}

fn point_dict<'py>(py: Python<'py>, p: &FrontierPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("target_return", p.target_return)?;
    d.set_item("realized_return", p.realized_return)?;
    d.set_item("volatility", p.volatility)?;
    d.set_item("weights", p.weights.iter().copied().collect::<Vec<f64>>())?;
    Ok(d)
}

#[pyfunction]
fn min_variance_at_target<'py>(
    py: Python<'py>,
    mu_hat: Vec<f64>,
    cov: &PyCovariance,
    target: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = frontier::min_variance_at_target(&signal(mu_hat, "mu_hat")?, &cov.inner, target).map_err(err)?;
    point_dict(py, &p)
}

/// Frontier points plus its convexity diagnostics.
#[pyfunction]
#[pyo3(signature = (mu_hat, cov, n_points = 50, span = (1.5, 1.5), evaluation = None))]
fn sweep_frontier<'py>(
    py: Python<'py>,
    mu_hat: Vec<f64>,
    cov: &PyCovariance,
    n_points: usize,
    span: (f64, f64),
    evaluation: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mu_hat = signal(mu_hat, "mu_hat")?;
    let eval = match evaluation {
        Some(v) => signal(v, "evaluation")?,
        None => mu_hat.clone(),
    };
    let f = frontier::sweep_frontier_evaluated(&mu_hat, &eval, &cov.inner, n_points, span).map_err(err)?;
    let report = frontier::convexity_report(&f).map_err(err)?;
    let out = PyDict::new(py);
    let points = f.points.iter().map(|p| point_dict(py, p)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("points", points)?;
    out.set_item("skipped", f.skipped.clone())?;
    out.set_item("min_second_difference", report.min_second_difference)?;
    out.set_item("fit_r_squared", report.fit_r_squared)?;
    out.set_item("leading_coefficient", report.leading_coefficient)?;
    out.set_item("positive_realized_return", report.positive_realized_return)?;
    out.set_item("convex", report.is_convex())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (alpha, beta, gamma, sigma_zeta, normalization = "variance-exact", sigma_eps = 1.0))]
fn attenuated_slope(alpha: f64, beta: f64, gamma: f64, sigma_zeta: f64, normalization: &str, sigma_eps: f64) -> PyResult<f64> {
    let p = attenuation_params(alpha, beta, gamma, sigma_zeta, normalization, sigma_eps)?;
    Ok(factor_bias::attenuated_slope(&p))
}

fn attenuation_params(
    alpha: f64,
    beta: f64,
    gamma: f64,
    sigma_zeta: f64,
    norm: &str,
    sigma_eps: f64,
) -> PyResult<CancellationParams> {
    if !(alpha.abs() < 1.0) {
        return Err(PyValueError::new_err("|alpha| must be below 1"));
    }
    CancellationParams::new(alpha, beta, gamma, (1.0 - alpha * alpha).sqrt(), sigma_zeta, sigma_eps, normalization(norm)?)
        .map_err(err)
}

/// Monte Carlo slope of the misspecified regression.
#[pyfunction]
#[pyo3(signature = (alpha, beta, gamma, sigma_zeta, n, seed, stream = 0, normalization = "variance-exact"))]
#[allow(clippy::too_many_arguments)]
fn simulate_attenuation(
    alpha: f64,
    beta: f64,
    gamma: f64,
    sigma_zeta: f64,
    n: usize,
    seed: u64,
    stream: u64,
    normalization: &str,
) -> PyResult<f64> {
    let p = attenuation_params(alpha, beta, gamma, sigma_zeta, normalization, 1.0)?;
    let fit = factor_bias::simulate_attenuation(&p, &RngStream::new(seed, stream), n).map_err(err)?;
    Ok(fit.slope)
}

#[pyfunction]
fn biased_loading(beta_n: f64, gamma_n: f64, delta: f64) -> PyResult<f64> {
    Ok(factor_bias::biased_loading(&ConfounderModel::new(beta_n, gamma_n, delta).map_err(err)?))
}

/// Realized factor exposure of the portfolio built on misestimated loadings.
#[pyfunction]
fn misspecified_exposure(gamma: (f64, f64), beta: (f64, f64), delta: f64) -> PyResult<(f64, f64)> {
    let s = TwoAssetStructure::new([gamma.0, gamma.1], [beta.0, beta.1]);
    let e = factor_bias::misspecified_exposure(&s, delta).map_err(err)?;
    Ok((e.realized_exposure[0], e.realized_exposure[1]))
}

#[pyfunction]
#[pyo3(signature = (features, outcomes, max_iter = signals::DEFAULT_MAX_ITER, tol = signals::DEFAULT_TOL))]
fn fit_logistic<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = rows_to_matrix(&features)?;
    let names = (0..m.ncols()).map(|j| format!("x{j}")).collect();
    let panel = SamplePanel::new(m, names).map_err(err)?;
    let model = signals::fit_logistic(&panel, &outcomes, max_iter, tol).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("intercept", model.intercept)?;
    d.set_item("coefficients", model.coefficients.iter().copied().collect::<Vec<f64>>())?;
    d.set_item("converged", model.converged)?;
    d.set_item("separated", model.separated)?;
    d.set_item("n_iterations", model.n_iterations)?;
    Ok(d)
}

#[pyfunction]
fn prob_to_weight(p: Vec<f64>) -> PyResult<Vec<f64>> {
    signals::prob_to_weight(&p).map_err(err)
}

#[pyfunction]
fn power_transform(mu: Vec<f64>, p: f64) -> PyResult<Vec<f64>> {
    let t = signals::power_transform(&signal(mu, "mu")?, p).map_err(err)?;
    Ok(t.values.iter().copied().collect())
}

/// `(rate, correlation)`; correlation is `None` for a constant vector.
#[pyfunction]
fn sign_agreement(omega_true: Vec<f64>, omega_pred: Vec<f64>) -> PyResult<(f64, Option<f64>)> {
    let a = signals::sign_agreement(&WeightPair::new(omega_true, omega_pred).map_err(err)?);
    Ok((a.rate, a.correlation))
}

/// Default config of an experiment as JSON.
#[pyfunction]
fn default_config(experiment: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::default_for(experiment).map_err(err)?;
    serde_json::to_string_pretty(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(ExperimentConfig::from_json(config_json).map_err(err)?.hash())
}

/// Runs an experiment from its JSON config and returns the report as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    Ok(report.to_json())
}

#[pymodule]
fn frontier_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCovariance>()?;
    m.add_function(wrap_pyfunction!(generate_mu, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_alignment, m)?)?;
    m.add_function(wrap_pyfunction!(tangency_direction, m)?)?;
    m.add_function(wrap_pyfunction!(portfolio_stats, m)?)?;
    m.add_function(wrap_pyfunction!(min_variance_at_target, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_frontier, m)?)?;
    m.add_function(wrap_pyfunction!(attenuated_slope, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_attenuation, m)?)?;
    m.add_function(wrap_pyfunction!(biased_loading, m)?)?;
    m.add_function(wrap_pyfunction!(misspecified_exposure, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(prob_to_weight, m)?)?;
    m.add_function(wrap_pyfunction!(power_transform, m)?)?;
    m.add_function(wrap_pyfunction!(sign_agreement, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
