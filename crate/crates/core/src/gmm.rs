//! Two-step GMM for the inflation equation with lagged instruments and
//! Newey-West weighting.
//!
//! The moment `g_t = z_{t-1} (pi_t - beta*pi_e_t - kappa*ygap_t - kappa_inf*cinf_t)`
//! is linear in `(kappa, kappa_inf)`, so each step is a closed-form weighted
//! linear IV solve.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{IcpcError, Result};
use crate::formulas::{equilibrium_slopes, ModelParams};
use crate::hac::newey_west;
use crate::sim::{simulate_aggregate, ShockProcessSpec, TimeSeriesDataset};
use crate::stats::{auto_bandwidth, spd_inverse, variance};

/// Minimum number of periods for estimation.
pub const MIN_ESTIMATION_T: usize = 24;

/// Lag depths for the instrument vector `z_{t-1}`. A depth of `k` adds lags
/// `1..=k` of that variable; zero leaves the variable out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub pi_lags: usize,
    pub ygap_lags: usize,
    pub cinf_lags: usize,
    pub constant: bool,
}

impl Default for InstrumentSpec {
    /// `{1, pi_{t-1}, ygap_{t-1}, cinf_{t-1}, cinf_{t-2}}`.
    fn default() -> Self {
        InstrumentSpec {
            pi_lags: 1,
            ygap_lags: 1,
            cinf_lags: 2,
            constant: true,
        }
    }
}

impl InstrumentSpec {
    pub fn count(&self) -> usize {
        self.pi_lags + self.ygap_lags + self.cinf_lags + usize::from(self.constant)
    }

    pub fn max_lag(&self) -> usize {
        self.pi_lags.max(self.ygap_lags).max(self.cinf_lags)
    }

    /// Instruments must at least match the two slope parameters.
    pub fn validate(&self) -> Result<()> {
        if self.count() < 2 {
            return Err(IcpcError::invalid(
                "instruments",
                format!("{} instruments for 2 parameters", self.count()),
            ));
        }
        Ok(())
    }
}

/// Step-one weighting matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStepWeight {
    /// `(Z'Z / T)^{-1}`, i.e. two-stage least squares.
    #[default]
    InstrumentCrossProduct,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmOptions {
    /// Newey-West lag truncation; `None` uses `floor(4 (T/100)^(2/9))`.
    #[serde(default)]
    pub bandwidth: Option<usize>,
    #[serde(default)]
    pub first_step: FirstStepWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmResult {
    pub kappa_hat: f64,
    pub kappa_inf_hat: f64,
    /// HAC standard errors of `(kappa_hat, kappa_inf_hat)`.
    pub hac_se: [f64; 2],
    /// Asymptotic covariance divided by the effective sample size.
    pub vcov: [[f64; 2]; 2],
    pub j_stat: f64,
    pub j_df: usize,
    pub j_pvalue: Option<f64>,
    pub first_step: [f64; 2],
    pub bandwidth: usize,
    /// Effective sample size after dropping lags.
    pub n_obs: usize,
    pub n_instruments: usize,
    /// Set when the long-run covariance needed a ridge to be inverted.
    pub ridge_applied: bool,
}

/// Instrument, regressor and dependent-variable blocks of the linear moment.
#[derive(Debug, Clone)]
pub(crate) struct LinearDesign {
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub yd: DVector<f64>,
}

impl LinearDesign {
    fn rows(&self) -> usize {
        self.z.nrows()
    }

    fn moments_at(&self, coef: &Vector2<f64>) -> DMatrix<f64> {
        let resid = &self.yd - &self.x * coef;
        let mut g = self.z.clone();
        for (mut row, r) in g.row_iter_mut().zip(resid.iter()) {
            row *= *r;
        }
        g
    }
}

/// Rows `t = max_lag .. T-2`: the first `max_lag` periods feed the lags and
/// the final period is dropped because its expectation refers to an
/// unobserved `pi_{T+1}`.
pub(crate) fn build_design(
    data: &TimeSeriesDataset,
    spec: &InstrumentSpec,
    beta: f64,
) -> Result<LinearDesign> {
    data.validate()?;
    let t = data.len();
    let start = spec.max_lag();
    if t < start + 2 {
        return Err(IcpcError::InsufficientSample(format!(
            "{t} periods leave no usable rows after {start} lags"
        )));
    }
    let n = t - start - 1;
    let l = spec.count();
    let mut z = DMatrix::zeros(n, l);
    let mut x = DMatrix::zeros(n, 2);
    let mut yd = DVector::zeros(n);
    for (row, tt) in (start..t - 1).enumerate() {
        let mut k = 0;
        if spec.constant {
            z[(row, k)] = 1.0;
            k += 1;
        }
        for (col, lags) in [
            (&data.pi, spec.pi_lags),
            (&data.ygap, spec.ygap_lags),
            (&data.cinf, spec.cinf_lags),
        ] {
            for lag in 1..=lags {
                z[(row, k)] = col[tt - lag];
                k += 1;
            }
        }
        x[(row, 0)] = data.ygap[tt];
        x[(row, 1)] = data.cinf[tt];
        yd[row] = data.pi[tt] - beta * data.pi_e[tt];
    }
    Ok(LinearDesign { z, x, yd })
}

/// Per-period moment matrix (`T_eff x L`) at the given slopes.
pub fn moment_vector(
    data: &TimeSeriesDataset,
    spec: &InstrumentSpec,
    beta: f64,
    kappa: f64,
    kappa_inf: f64,
) -> Result<DMatrix<f64>> {
    if spec.count() == 0 {
        return Err(IcpcError::invalid("instruments", "empty instrument set"));
    }
    let design = build_design(data, spec, beta)?;
    Ok(design.moments_at(&Vector2::new(kappa, kappa_inf)))
}

fn to_matrix2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Solves `min g_bar' W g_bar` in closed form; returns the estimate and the
/// inverse of `S_zx' W S_zx`.
fn weighted_iv(
    s_zx: &DMatrix<f64>,
    s_zy: &DVector<f64>,
    w: &DMatrix<f64>,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let a = s_zx.transpose() * w * s_zx;
    let b = s_zx.transpose() * w * s_zy;
    let a2 = to_matrix2(&a);
    let scale = a2.abs().max();
    let eig = a2.symmetric_eigenvalues();
    if !(scale > 0.0) || eig.min() <= 1e-13 * scale {
        return Err(IcpcError::RankDeficient(
            "instruments do not identify (kappa, kappa_inf)".into(),
        ));
    }
    let a_inv = a2
        .try_inverse()
        .ok_or_else(|| IcpcError::RankDeficient("singular normal matrix".into()))?;
    Ok((a_inv * Vector2::new(b[0], b[1]), a_inv))
}

/// Two-step efficient GMM with default options.
pub fn two_step_gmm(
    data: &TimeSeriesDataset,
    spec: &InstrumentSpec,
    beta: f64,
) -> Result<GmmResult> {
    two_step_gmm_with(data, spec, beta, &GmmOptions::default())
}

pub fn two_step_gmm_with(
    data: &TimeSeriesDataset,
    spec: &InstrumentSpec,
    beta: f64,
    options: &GmmOptions,
) -> Result<GmmResult> {
    spec.validate()?;
    if !(beta.is_finite() && beta > 0.0 && beta < 1.0) {
        return Err(IcpcError::invalid("beta", format!("{beta} not in (0,1)")));
    }
    if data.len() < MIN_ESTIMATION_T {
        return Err(IcpcError::InsufficientSample(format!(
            "{} periods, need at least {MIN_ESTIMATION_T}",
            data.len()
        )));
    }
    let design = build_design(data, spec, beta)?;
    let n = design.rows();
    let l = spec.count();
    if n < l {
        return Err(IcpcError::InsufficientSample(format!(
            "{n} usable rows for {l} instruments"
        )));
    }
    let nf = n as f64;
    let s_zx = design.z.transpose() * &design.x / nf;
    let s_zy = design.z.transpose() * &design.yd / nf;

    let w0 = match options.first_step {
        FirstStepWeight::Identity => DMatrix::identity(l, l),
        FirstStepWeight::InstrumentCrossProduct => {
            let zz = design.z.transpose() * &design.z / nf;
            spd_inverse(&zz).ok_or_else(|| {
                IcpcError::RankDeficient("instrument cross-product is singular".into())
            })?
        }
    };
    let (first, _) = weighted_iv(&s_zx, &s_zy, &w0)?;

    let bandwidth = options.bandwidth.unwrap_or_else(|| auto_bandwidth(n));
    let s_hat = newey_west(&design.moments_at(&first), bandwidth)?;
    let (s_inv, ridge_applied) = match spd_inverse(&s_hat) {
        Some(inv) => (inv, false),
        None => {
            // exact-fit data give S = 0; scale the ridge by the instruments then
            let zz_trace = design.z.norm_squared() / nf;
            let ridge = 1e-10 * s_hat.trace().max(zz_trace) / l as f64;
            let regularized = &s_hat + DMatrix::identity(l, l) * ridge;
            let inv = spd_inverse(&regularized).ok_or_else(|| {
                IcpcError::RankDeficient("long-run moment covariance is singular".into())
            })?;
            (inv, true)
        }
    };

    let (coef, bread) = weighted_iv(&s_zx, &s_zy, &s_inv)?;
    let vcov = bread / nf;
    let g_bar = &s_zy - &s_zx * DVector::from_column_slice(coef.as_slice());
    let j_stat = nf * (g_bar.transpose() * &s_inv * &g_bar)[(0, 0)];
    let j_df = l - 2;
    let j_pvalue = if j_df > 0 {
        ChiSquared::new(j_df as f64).ok().map(|d| 1.0 - d.cdf(j_stat.max(0.0)))
    } else {
        None
    };

    Ok(GmmResult {
        kappa_hat: coef[0],
        kappa_inf_hat: coef[1],
        hac_se: [vcov[(0, 0)].max(0.0).sqrt(), vcov[(1, 1)].max(0.0).sqrt()],
        vcov: [[vcov[(0, 0)], vcov[(0, 1)]], [vcov[(1, 0)], vcov[(1, 1)]]],
        j_stat,
        j_df,
        j_pvalue,
        first_step: [first[0], first[1]],
        bandwidth,
        n_obs: n,
        n_instruments: l,
        ridge_applied,
    })
}

/// Reconstructed `phi*rho` and inference variance-share rows derived from a
/// GMM fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedEstimates {
    /// `(r - 1)/(r + 1)` with `r = kappa_inf_hat / (lambda_bar * kappa_hat)`,
    /// inverting the attenuation/amplification pair. Needs `lambda_bar`.
    pub phi_rho_hat: Option<f64>,
    pub phi_rho_se: Option<f64>,
    /// Variance-share bound at the estimated slopes and sample variances.
    pub eta_inf_hat: f64,
    pub eta_inf_se: f64,
}

pub fn derived_estimates(
    result: &GmmResult,
    data: &TimeSeriesDataset,
    spec: &InstrumentSpec,
    beta: f64,
    lambda_bar: Option<f64>,
) -> Result<DerivedEstimates> {
    let design = build_design(data, spec, beta)?;
    let coef = Vector2::new(result.kappa_hat, result.kappa_inf_hat);
    let resid: Vec<f64> = (&design.yd - &design.x * coef).iter().copied().collect();
    let ygap: Vec<f64> = design.x.column(0).iter().copied().collect();
    let cinf: Vec<f64> = design.x.column(1).iter().copied().collect();
    let (vy, vc, vu) = (variance(&ygap), variance(&cinf), variance(&resid));
    let (k, ki) = (result.kappa_hat, result.kappa_inf_hat);
    let v = Matrix2::new(
        result.vcov[0][0],
        result.vcov[0][1],
        result.vcov[1][0],
        result.vcov[1][1],
    );
    let delta_se = |grad: Vector2<f64>| (grad.transpose() * v * grad)[(0, 0)].max(0.0).sqrt();

    let num = ki * ki * vc;
    let den = k * k * vy + num + vu;
    if den <= 0.0 {
        return Err(IcpcError::Degenerate("zero inflation variance".into()));
    }
    let eta = num / den;
    let eta_grad = Vector2::new(-num * 2.0 * k * vy / (den * den), 2.0 * ki * vc * (den - num) / (den * den));

    let (phi_rho_hat, phi_rho_se) = match lambda_bar {
        Some(lb) if lb > 0.0 && k != 0.0 => {
            let r = ki / (lb * k);
            let x = (r - 1.0) / (r + 1.0);
            let dx_dr = 2.0 / (r + 1.0).powi(2);
            let grad = Vector2::new(dx_dr * (-ki / (lb * k * k)), dx_dr / (lb * k));
            (Some(x), Some(delta_se(grad)))
        }
        _ => (None, None),
    };
    Ok(DerivedEstimates {
        phi_rho_hat,
        phi_rho_se,
        eta_inf_hat: eta,
        eta_inf_se: delta_se(eta_grad),
    })
}

/// Monte Carlo summary for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub t: usize,
    pub reps: usize,
    pub failures: usize,
    pub mean_kappa: f64,
    pub mean_kappa_inf: f64,
    /// Monte Carlo standard errors of the two means.
    pub mc_se_kappa: f64,
    pub mc_se_kappa_inf: f64,
    pub rmse_kappa: f64,
    pub rmse_kappa_inf: f64,
    /// Share of replications whose nominal 95% HAC interval covers the truth.
    pub coverage_kappa: f64,
    pub coverage_kappa_inf: f64,
    /// Share of replications rejecting the J test at 5%.
    pub j_reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub true_kappa: f64,
    pub true_kappa_inf: f64,
    pub rows: Vec<ConsistencyRow>,
    /// Slope of log RMSE on log T; `None` with fewer than two sample sizes.
    pub rate_kappa: Option<f64>,
    pub rate_kappa_inf: Option<f64>,
}

/// Replication seed for sample-size index `t_index` and replication `rep`.
pub fn replication_seed(seed: u64, t_index: usize, reps: usize, rep: usize) -> u64 {
    seed.wrapping_add((t_index * reps + rep) as u64)
}

/// Root-mean-square error and coverage of the two-step estimator across
/// sample sizes, using [`simulate_aggregate`] as the data generator.
pub fn consistency_study(
    params: &ModelParams,
    spec: &ShockProcessSpec,
    t_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ConsistencyTable> {
    consistency_study_with(
        params,
        spec,
        t_grid,
        reps,
        seed,
        &InstrumentSpec::default(),
        &GmmOptions::default(),
    )
}

pub fn consistency_study_with(
    params: &ModelParams,
    spec: &ShockProcessSpec,
    t_grid: &[usize],
    reps: usize,
    seed: u64,
    instruments: &InstrumentSpec,
    options: &GmmOptions,
) -> Result<ConsistencyTable> {
    let truth = equilibrium_slopes(params)?;
    spec.validate()?;
    instruments.validate()?;
    if reps == 0 {
        return Err(IcpcError::invalid("reps", "need at least one replication"));
    }
    if t_grid.is_empty() {
        return Err(IcpcError::invalid("t_grid", "empty"));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t < MIN_ESTIMATION_T) {
        return Err(IcpcError::invalid("t_grid", format!("T = {t} < {MIN_ESTIMATION_T}")));
    }
    let z975 = Normal::new(0.0, 1.0)
        .map_err(|e| IcpcError::Degenerate(e.to_string()))?
        .inverse_cdf(0.975);

    let mut rows = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let fits: Vec<Option<GmmResult>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let s = replication_seed(seed, ti, reps, r);
                simulate_aggregate(params, spec, t, s)
                    .and_then(|d| two_step_gmm_with(&d, instruments, params.beta, options))
                    .ok()
            })
            .collect();
        let ok: Vec<&GmmResult> = fits.iter().flatten().collect();
        let m = ok.len();
        if m == 0 {
            return Err(IcpcError::Degenerate(format!("every replication failed at T = {t}")));
        }
        let mf = m as f64;
        let k: Vec<f64> = ok.iter().map(|f| f.kappa_hat).collect();
        let ki: Vec<f64> = ok.iter().map(|f| f.kappa_inf_hat).collect();
        let mean_k = k.iter().sum::<f64>() / mf;
        let mean_ki = ki.iter().sum::<f64>() / mf;
        let mc_se = |xs: &[f64], mu: f64| {
            if m > 1 {
                (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (mf - 1.0) / mf).sqrt()
            } else {
                f64::NAN
            }
        };
        let rmse = |xs: &[f64], truth: f64| {
            (xs.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / mf).sqrt()
        };
        let covers = |f: &&GmmResult, idx: usize, truth: f64| {
            let est = if idx == 0 { f.kappa_hat } else { f.kappa_inf_hat };
            (est - truth).abs() <= z975 * f.hac_se[idx]
        };
        rows.push(ConsistencyRow {
            t,
            reps,
            failures: reps - m,
            mean_kappa: mean_k,
            mean_kappa_inf: mean_ki,
            mc_se_kappa: mc_se(&k, mean_k),
            mc_se_kappa_inf: mc_se(&ki, mean_ki),
            rmse_kappa: rmse(&k, truth.kappa),
            rmse_kappa_inf: rmse(&ki, truth.kappa_inf),
            coverage_kappa: ok.iter().filter(|f| covers(f, 0, truth.kappa)).count() as f64 / mf,
            coverage_kappa_inf: ok.iter().filter(|f| covers(f, 1, truth.kappa_inf)).count() as f64
                / mf,
            j_reject_rate: ok
                .iter()
                .filter(|f| f.j_pvalue.is_some_and(|p| p < 0.05))
                .count() as f64
                / mf,
        });
    }

    let rate = |pick: fn(&ConsistencyRow) -> f64| -> Option<f64> {
        if rows.len() < 2 {
            return None;
        }
        let x: Vec<f64> = rows.iter().map(|r| (r.t as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| pick(r).ln()).collect();
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    };
    let rate_kappa = rate(|r| r.rmse_kappa);
    let rate_kappa_inf = rate(|r| r.rmse_kappa_inf);
    Ok(ConsistencyTable {
        true_kappa: truth.kappa,
        true_kappa_inf: truth.kappa_inf,
        rows,
        rate_kappa,
        rate_kappa_inf,
    })
}
