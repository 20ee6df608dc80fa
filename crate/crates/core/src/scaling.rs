//! Log-log scaling regression of the estimated inference pass-through on mean
//! AI intensity, `log10 kappa_inf_hat = a + b log10 lambda_bar`, across
//! simulated windows whose `lambda_bar` is set by design.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IcpcError, Result};
use crate::formulas::ModelParams;
use crate::gmm::{two_step_gmm_with, GmmOptions, InstrumentSpec};
use crate::hac::newey_west;
use crate::sim::{simulate_aggregate, ShockProcessSpec};
use crate::stats::{auto_bandwidth, ols, simple_regression};

/// Number of windows used when a caller does not choose.
pub const DEFAULT_TOTAL_WINDOWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub window: usize,
    pub seed: u64,
    pub lambda_bar: f64,
    pub kappa_inf_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub a_hat: f64,
    pub b_hat: f64,
    pub r2: f64,
    /// Classical OLS standard errors.
    pub a_se: f64,
    pub b_se: f64,
    /// Newey-West standard errors over the window ordering.
    pub a_hac_se: f64,
    pub b_hac_se: f64,
    pub bandwidth: usize,
    pub n_windows: usize,
    /// Windows dropped because estimation failed or gave a non-positive
    /// pass-through (outside the log domain).
    pub failures: usize,
    pub points: Vec<ScalingPoint>,
}

pub fn scaling_experiment(
    base: &ModelParams,
    spec: &ShockProcessSpec,
    lambda_grid: &[f64],
    t_window: usize,
    windows_per_lambda: usize,
    seed: u64,
) -> Result<ScalingResult> {
    scaling_experiment_with(
        base,
        spec,
        lambda_grid,
        t_window,
        windows_per_lambda,
        seed,
        &InstrumentSpec::default(),
        &GmmOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn scaling_experiment_with(
    base: &ModelParams,
    spec: &ShockProcessSpec,
    lambda_grid: &[f64],
    t_window: usize,
    windows_per_lambda: usize,
    seed: u64,
    instruments: &InstrumentSpec,
    options: &GmmOptions,
) -> Result<ScalingResult> {
    base.validate()?;
    spec.validate()?;
    if let Some(&bad) = lambda_grid.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
        return Err(IcpcError::invalid(
            "lambda_grid",
            format!("{bad} outside (0,1]; the regression is in logs"),
        ));
    }
    let mut distinct = lambda_grid.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(IcpcError::Degenerate(
            "lambda_grid needs at least two distinct values".into(),
        ));
    }
    if windows_per_lambda * lambda_grid.len() < 3 {
        return Err(IcpcError::invalid("windows_per_lambda", "fewer than 3 windows in total"));
    }

    let jobs: Vec<(usize, f64)> = lambda_grid
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, windows_per_lambda))
        .enumerate()
        .collect();
    let estimates: Vec<Option<ScalingPoint>> = jobs
        .par_iter()
        .map(|&(window, lambda_bar)| {
            let params = ModelParams { lambda_bar, ..*base };
            let s = seed.wrapping_add(window as u64);
            let fit = simulate_aggregate(&params, spec, t_window, s)
                .and_then(|d| two_step_gmm_with(&d, instruments, params.beta, options))
                .ok()?;
            (fit.kappa_inf_hat > 0.0).then_some(ScalingPoint {
                window,
                seed: s,
                lambda_bar,
                kappa_inf_hat: fit.kappa_inf_hat,
            })
        })
        .collect();
    let points: Vec<ScalingPoint> = estimates.into_iter().flatten().collect();
    let failures = jobs.len() - points.len();

    let x: Vec<f64> = points.iter().map(|p| p.lambda_bar.log10()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.kappa_inf_hat.log10()).collect();
    let fit = simple_regression(&x, &y)?;

    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { x[i] });
    let ols_fit = ols(&design, &DVector::from_vec(y.clone()))?;
    let scores = DMatrix::from_fn(n, 2, |i, k| design[(i, k)] * ols_fit.residuals[i]);
    let bandwidth = auto_bandwidth(n).min(n - 1);
    let s_hat = newey_west(&scores, bandwidth)?;
    let v = &ols_fit.xtx_inv * (s_hat * n as f64) * &ols_fit.xtx_inv;

    Ok(ScalingResult {
        a_hat: fit.intercept,
        b_hat: fit.slope,
        r2: fit.r2,
        a_se: fit.intercept_se,
        b_se: fit.slope_se,
        a_hac_se: v[(0, 0)].max(0.0).sqrt(),
        b_hac_se: v[(1, 1)].max(0.0).sqrt(),
        bandwidth,
        n_windows: n,
        failures,
        points,
    })
}
