//! Python bindings. Structured results come back as plain dicts.

use icpc_core::formulas::{self, ShockMoments};
use icpc_core::gmm::{two_step_gmm_with, GmmOptions, InstrumentSpec};
use icpc_core::meanfield::{fp_mean_path, FpGridSpec, MeanFieldConfig};
use icpc_core::panel::{driscoll_kraay, simulate_panel, PanelDataset, PanelDgp, PanelRecord};
use icpc_core::scaling::scaling_experiment;
use icpc_core::sim::{simulate_aggregate as sim_aggregate, ShockPaths, ShockProcessSpec, TimeSeriesDataset};
use icpc_core::IcpcError;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: IcpcError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn shock_spec(name: &str) -> PyResult<ShockProcessSpec> {
    match name {
        "default" => Ok(ShockProcessSpec::default()),
        "estimation" => Ok(ShockProcessSpec::estimation_default()),
        "scaling" => Ok(ShockProcessSpec::scaling_default()),
        other => Err(PyValueError::new_err(format!(
            "unknown shock design `{other}` (expected default, estimation or scaling)"
        ))),
    }
}

/// Structural calibration; defaults reproduce the baseline calibration.
#[pyclass(name = "ModelParams", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: formulas::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (theta=0.75, beta=0.996, lambda_bar=0.18, phi=0.32, rho=0.20, omega=0.5, gamma=2.0))]
    fn new(theta: f64, beta: f64, lambda_bar: f64, phi: f64, rho: f64, omega: f64, gamma: f64) -> PyResult<Self> {
        let inner = formulas::ModelParams {
            theta,
            beta,
            lambda_bar,
            phi,
            rho,
            omega,
            gamma,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn lambda_bar(&self) -> f64 {
        self.inner.lambda_bar
    }
    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// `phi * rho`.
    fn algorithmic_intensity(&self) -> f64 {
        self.inner.algorithmic_intensity()
    }

    /// `(kappa, kappa_inf)` without algorithmic pricing.
    fn closed_form_slopes(&self) -> PyResult<(f64, f64)> {
        let s = formulas::closed_form_slopes(&self.inner).map_err(py_err)?;
        Ok((s.kappa, s.kappa_inf))
    }

    /// `(kappa_alg, kappa_inf_alg)`.
    fn equilibrium_slopes(&self) -> PyResult<(f64, f64)> {
        let s = formulas::equilibrium_slopes(&self.inner).map_err(py_err)?;
        Ok((s.kappa, s.kappa_inf))
    }

    fn taylor_coefficient(&self) -> PyResult<f64> {
        formulas::taylor_coefficient(&self.inner).map_err(py_err)
    }

    fn optimal_inflation_target(&self, expected_cinf_next: f64) -> PyResult<f64> {
        formulas::optimal_inflation_target(&self.inner, expected_cinf_next).map_err(py_err)
    }

    fn lucas_welfare_cost(&self, var_inf: f64) -> PyResult<f64> {
        formulas::lucas_welfare_cost(&self.inner, var_inf).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(theta={}, beta={}, lambda_bar={}, phi={}, rho={}, omega={}, gamma={})",
            p.theta, p.beta, p.lambda_bar, p.phi, p.rho, p.omega, p.gamma
        )
    }
}

#[pyfunction]
#[pyo3(signature = (params, var_inf, var_ygap, var_u, w_cl=0.0, w_ai=0.0))]
fn welfare_decomposition<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    var_inf: f64,
    var_ygap: f64,
    var_u: f64,
    w_cl: f64,
    w_ai: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let shocks = ShockMoments::new(var_inf, var_ygap, var_u);
    let r = formulas::welfare_decomposition(&params.inner, &shocks, w_cl, w_ai).map_err(py_err)?;
    to_dict(py, &r)
}

#[pyfunction]
fn policy_report<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    var_inf: f64,
    var_ygap: f64,
    var_u: f64,
    expected_cinf_next: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let shocks = ShockMoments::new(var_inf, var_ygap, var_u);
    let r = formulas::policy_report(&params.inner, &shocks, expected_cinf_next).map_err(py_err)?;
    to_dict(py, &r)
}

#[pyfunction]
fn indexing_cutoff(params: PyRef<'_, PyModelParams>, var_inf: f64, var_ygap: f64, var_u: f64, eta_bar: f64) -> PyResult<f64> {
    let shocks = ShockMoments::new(var_inf, var_ygap, var_u);
    formulas::indexing_cutoff(&params.inner, &shocks, eta_bar).map_err(py_err)
}

/// Simulated aggregate series as a dict of lists.
#[pyfunction]
#[pyo3(signature = (params, t_len, seed, shocks="estimation"))]
fn simulate_aggregate<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    t_len: usize,
    seed: u64,
    shocks: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let d = sim_aggregate(&params.inner, &shock_spec(shocks)?, t_len, seed).map_err(py_err)?;
    let value = serde_json::json!({
        "period": d.periods,
        "pi": d.pi,
        "pi_e": d.pi_e,
        "ygap": d.ygap,
        "cinf": d.cinf,
        "u": d.u,
    });
    to_dict(py, &value)
}

/// Two-step GMM with the default instrument set.
#[pyfunction]
#[pyo3(signature = (pi, pi_e, ygap, cinf, beta=0.996, bandwidth=None))]
fn two_step_gmm<'py>(
    py: Python<'py>,
    pi: Vec<f64>,
    pi_e: Vec<f64>,
    ygap: Vec<f64>,
    cinf: Vec<f64>,
    beta: f64,
    bandwidth: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let data = TimeSeriesDataset {
        periods: (1..=pi.len()).map(|t| t.to_string()).collect(),
        pi,
        pi_e,
        ygap,
        cinf,
        u: None,
    };
    let options = GmmOptions {
        bandwidth,
        ..GmmOptions::default()
    };
    let r = two_step_gmm_with(&data, &InstrumentSpec::default(), beta, &options).map_err(py_err)?;
    to_dict(py, &r)
}

/// Newey-West long-run covariance of the rows of `moments`.
#[pyfunction]
fn newey_west(moments: Vec<Vec<f64>>, bandwidth: usize) -> PyResult<Vec<Vec<f64>>> {
    let t = moments.len();
    let l = moments.first().map_or(0, Vec::len);
    if t == 0 || l == 0 || moments.iter().any(|r| r.len() != l) {
        return Err(PyValueError::new_err("moments must be a non-empty rectangular T x L list"));
    }
    let m = DMatrix::from_fn(t, l, |i, k| moments[i][k]);
    let s = icpc_core::hac::newey_west(&m, bandwidth).map_err(py_err)?;
    Ok((0..l).map(|a| (0..l).map(|b| s[(a, b)]).collect()).collect())
}

/// Within-group regression with Driscoll-Kraay errors on long-format lists.
#[pyfunction]
#[pyo3(signature = (country, period, pi_core, cinf, ygap, bandwidth=None))]
fn panel_regression<'py>(
    py: Python<'py>,
    country: Vec<String>,
    period: Vec<String>,
    pi_core: Vec<f64>,
    cinf: Vec<f64>,
    ygap: Vec<f64>,
    bandwidth: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let n = country.len();
    if [period.len(), pi_core.len(), cinf.len(), ygap.len()].iter().any(|&k| k != n) {
        return Err(PyValueError::new_err("all columns must have the same length"));
    }
    let records: Vec<PanelRecord> = (0..n)
        .map(|i| PanelRecord {
            country: country[i].clone(),
            period: period[i].clone(),
            pi_core: pi_core[i],
            cinf_lag1: cinf[i],
            ygap: ygap[i],
        })
        .collect();
    let data = PanelDataset::from_records(&records).map_err(py_err)?;
    let r = driscoll_kraay(&data, bandwidth).map_err(py_err)?;
    to_dict(py, &r)
}

/// Synthetic G7-shaped panel in long format.
#[pyfunction]
#[pyo3(signature = (seed, n_units=7, t_len=52, b=0.094, xi=0.038))]
fn simulate_g7_panel<'py>(py: Python<'py>, seed: u64, n_units: usize, t_len: usize, b: f64, xi: f64) -> PyResult<Bound<'py, PyAny>> {
    let dgp = PanelDgp {
        n_units,
        t_len,
        b,
        xi,
        ..PanelDgp::default()
    };
    let data = simulate_panel(&dgp, seed).map_err(py_err)?;
    let recs = data.to_records();
    let value = serde_json::json!({
        "country": recs.iter().map(|r| r.country.clone()).collect::<Vec<_>>(),
        "period": recs.iter().map(|r| r.period.clone()).collect::<Vec<_>>(),
        "pi_core": recs.iter().map(|r| r.pi_core).collect::<Vec<_>>(),
        "cinf": recs.iter().map(|r| r.cinf_lag1).collect::<Vec<_>>(),
        "ygap": recs.iter().map(|r| r.ygap).collect::<Vec<_>>(),
    });
    to_dict(py, &value)
}

#[pyfunction]
#[pyo3(signature = (params, lambda_grid, t_window=2000, windows_per_lambda=10, seed=0))]
fn scaling<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    lambda_grid: Vec<f64>,
    t_window: usize,
    windows_per_lambda: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = scaling_experiment(
        &params.inner,
        &ShockProcessSpec::scaling_default(),
        &lambda_grid,
        t_window,
        windows_per_lambda,
        seed,
    )
    .map_err(py_err)?;
    to_dict(py, &r)
}

/// Mean of the Fokker-Planck density, initial value then one per period.
#[pyfunction]
#[pyo3(signature = (params, ygap, cinf, sigma_p2=0.5, cells=256))]
fn fp_mean(params: PyRef<'_, PyModelParams>, ygap: Vec<f64>, cinf: Vec<f64>, sigma_p2: f64, cells: usize) -> PyResult<Vec<f64>> {
    if ygap.len() != cinf.len() {
        return Err(PyValueError::new_err("ygap and cinf must have the same length"));
    }
    let t = ygap.len();
    let shocks = ShockPaths {
        u: vec![0.0; t],
        ygap,
        cinf,
    };
    let cfg = MeanFieldConfig::from_params(&params.inner, sigma_p2).map_err(py_err)?;
    let spec = FpGridSpec {
        cells,
        ..FpGridSpec::default()
    };
    Ok(fp_mean_path(&cfg, &shocks, t, &spec).map_err(py_err)?.means)
}

#[pymodule]
fn icpc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(welfare_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(policy_report, m)?)?;
    m.add_function(wrap_pyfunction!(indexing_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(two_step_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(newey_west, m)?)?;
    m.add_function(wrap_pyfunction!(panel_regression, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_g7_panel, m)?)?;
    m.add_function(wrap_pyfunction!(scaling, m)?)?;
    m.add_function(wrap_pyfunction!(fp_mean, m)?)?;
    Ok(())
}
