//! Country fixed-effects regression
//! `pi_core_{j,t} = alpha_j + b * cinf_{j,t-1} + xi * ygap_{j,t} + e_{j,t}`
//! by within-group OLS with Driscoll-Kraay standard errors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{IcpcError, Result};
use crate::gmm::MIN_ESTIMATION_T;
use crate::hac::newey_west;
use crate::sim::stream_rng;
use crate::stats::{auto_bandwidth, ols};

/// One long-format observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub country: String,
    pub period: String,
    pub pi_core: f64,
    /// Inference-cost index lagged one period, aligned to `period`.
    pub cinf_lag1: f64,
    pub ygap: f64,
}

/// Aligned panel. Columns are indexed `[country][period]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub countries: Vec<String>,
    pub periods: Vec<String>,
    pub pi_core: Vec<Vec<f64>>,
    pub cinf_lag1: Vec<Vec<f64>>,
    pub ygap: Vec<Vec<f64>>,
    /// False when periods had to be dropped to obtain complete cross-sections.
    pub balanced: bool,
    pub dropped_periods: Vec<String>,
}

/// Orders period labels numerically when every label is an integer and
/// lexicographically otherwise (`2022-01` style labels sort correctly).
pub(crate) fn sort_periods(labels: &mut [String]) {
    if labels.iter().all(|l| l.trim().parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.trim().parse::<i64>().unwrap_or_default());
    } else {
        labels.sort();
    }
}

impl PanelDataset {
    pub fn n_units(&self) -> usize {
        self.countries.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    /// Builds an aligned panel from long-format records.
    ///
    /// A period missing strictly inside a country's observed range is a gap
    /// and an error. Periods outside some country's range are dropped so
    /// that every retained cross-section is complete.
    pub fn from_records(records: &[PanelRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(IcpcError::InsufficientSample("empty panel".into()));
        }
        let mut by_country: BTreeMap<&str, BTreeMap<&str, &PanelRecord>> = BTreeMap::new();
        for r in records {
            if by_country
                .entry(&r.country)
                .or_default()
                .insert(&r.period, r)
                .is_some()
            {
                return Err(IcpcError::Misaligned(format!(
                    "country `{}` has period `{}` twice",
                    r.country, r.period
                )));
            }
        }
        let mut all: Vec<String> = records
            .iter()
            .map(|r| r.period.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        sort_periods(&mut all);

        let mut keep = vec![true; all.len()];
        for (country, obs) in &by_country {
            let present: Vec<usize> = all
                .iter()
                .enumerate()
                .filter(|(_, p)| obs.contains_key(p.as_str()))
                .map(|(i, _)| i)
                .collect();
            let (first, last) = (present[0], present[present.len() - 1]);
            if let Some(missing) = (first..=last).find(|i| !obs.contains_key(all[*i].as_str())) {
                return Err(IcpcError::PanelGap {
                    country: country.to_string(),
                    period: all[missing].clone(),
                });
            }
            for (i, k) in keep.iter_mut().enumerate() {
                if i < first || i > last {
                    *k = false;
                }
            }
        }
        let periods: Vec<String> = all
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| p.clone())
            .collect();
        let dropped_periods: Vec<String> = all
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| !k)
            .map(|(p, _)| p.clone())
            .collect();
        if periods.is_empty() {
            return Err(IcpcError::Misaligned("countries share no common period".into()));
        }
        let countries: Vec<String> = by_country.keys().map(|c| c.to_string()).collect();
        let column = |f: fn(&PanelRecord) -> f64| -> Vec<Vec<f64>> {
            by_country
                .values()
                .map(|obs| periods.iter().map(|p| f(obs[p.as_str()])).collect())
                .collect()
        };
        Ok(PanelDataset {
            pi_core: column(|r| r.pi_core),
            cinf_lag1: column(|r| r.cinf_lag1),
            ygap: column(|r| r.ygap),
            balanced: dropped_periods.is_empty(),
            dropped_periods,
            countries,
            periods,
        })
    }

    /// Long-format records in country-major order.
    pub fn to_records(&self) -> Vec<PanelRecord> {
        let mut out = Vec::with_capacity(self.n_units() * self.n_periods());
        for (j, c) in self.countries.iter().enumerate() {
            for (t, p) in self.periods.iter().enumerate() {
                out.push(PanelRecord {
                    country: c.clone(),
                    period: p.clone(),
                    pi_core: self.pi_core[j][t],
                    cinf_lag1: self.cinf_lag1[j][t],
                    ygap: self.ygap[j][t],
                });
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_units();
        let t = self.n_periods();
        if n == 0 || t == 0 {
            return Err(IcpcError::InsufficientSample("empty panel".into()));
        }
        for col in [&self.pi_core, &self.cinf_lag1, &self.ygap] {
            if col.len() != n || col.iter().any(|c| c.len() != t) {
                return Err(IcpcError::Misaligned("panel columns are not N x T".into()));
            }
            if col.iter().flatten().any(|v| !v.is_finite()) {
                return Err(IcpcError::Misaligned("non-finite value in panel".into()));
            }
        }
        Ok(())
    }
}

/// Panel columns demeaned by country, with the country means kept for
/// recovering fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Demeaned {
    pub pi_core: Vec<Vec<f64>>,
    pub cinf_lag1: Vec<Vec<f64>>,
    pub ygap: Vec<Vec<f64>>,
    /// Country means of `(pi_core, cinf_lag1, ygap)`.
    pub means: Vec<[f64; 3]>,
}

impl Demeaned {
    /// Adds the stored means back.
    pub fn reconstruct(&self) -> [Vec<Vec<f64>>; 3] {
        let add = |col: &Vec<Vec<f64>>, k: usize| -> Vec<Vec<f64>> {
            col.iter()
                .zip(&self.means)
                .map(|(row, m)| row.iter().map(|v| v + m[k]).collect())
                .collect()
        };
        [add(&self.pi_core, 0), add(&self.cinf_lag1, 1), add(&self.ygap, 2)]
    }
}

pub fn within_transform(data: &PanelDataset) -> Result<Demeaned> {
    data.validate()?;
    let demean = |row: &Vec<f64>| -> (Vec<f64>, f64) {
        let m = crate::stats::mean(row);
        (row.iter().map(|v| v - m).collect(), m)
    };
    let mut means = Vec::with_capacity(data.n_units());
    let mut pi_core = Vec::new();
    let mut cinf_lag1 = Vec::new();
    let mut ygap = Vec::new();
    for j in 0..data.n_units() {
        let (p, mp) = demean(&data.pi_core[j]);
        let (c, mc) = demean(&data.cinf_lag1[j]);
        let (y, my) = demean(&data.ygap[j]);
        pi_core.push(p);
        cinf_lag1.push(c);
        ygap.push(y);
        means.push([mp, mc, my]);
    }
    Ok(Demeaned {
        pi_core,
        cinf_lag1,
        ygap,
        means,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub b_hat: f64,
    pub xi_hat: f64,
    /// Driscoll-Kraay standard errors of `(b_hat, xi_hat)`.
    pub dk_se: [f64; 2],
    pub vcov: [[f64; 2]; 2],
    /// Classical OLS standard errors, for comparison.
    pub ols_se: [f64; 2],
    pub r2_within: f64,
    pub fixed_effects: Vec<(String, f64)>,
    pub bandwidth: usize,
    pub n_units: usize,
    pub n_periods: usize,
    pub balanced: bool,
    pub dropped_periods: Vec<String>,
    /// Degrees of freedom for t-based intervals, `T - 1`.
    pub df: usize,
    /// Two-sided 95% critical value under fixed-b asymptotics for the
    /// Bartlett kernel at this bandwidth and sample length.
    pub crit_value: f64,
    pub wald_p: Option<f64>,
}

/// Kiefer-Vogelsang fixed-b 97.5% quantile for Bartlett-kernel HAC
/// t-statistics, `b = (bandwidth + 1) / T`.
pub fn fixed_b_critical_value(bandwidth: usize, t_len: usize) -> f64 {
    let b = (bandwidth as f64 + 1.0) / t_len.max(1) as f64;
    1.96 + b * (2.9694 + b * (0.4160 - 0.5324 * b))
}

/// Within-group OLS with Driscoll-Kraay covariance; `bandwidth = None` uses
/// the automatic Newey-West rule on T.
pub fn driscoll_kraay(data: &PanelDataset, bandwidth: Option<usize>) -> Result<PanelResult> {
    let dm = within_transform(data)?;
    let n = data.n_units();
    let t = data.n_periods();
    if t < MIN_ESTIMATION_T {
        return Err(IcpcError::InsufficientSample(format!(
            "{t} periods per country, need at least {MIN_ESTIMATION_T}"
        )));
    }
    let bw = bandwidth.unwrap_or_else(|| auto_bandwidth(t));
    if bw >= t {
        return Err(IcpcError::invalid("bandwidth", format!("{bw} must be smaller than T = {t}")));
    }
    let rows = n * t;
    // row index j*t + s
    let x = DMatrix::from_fn(rows, 2, |r, k| {
        let (j, s) = (r / t, r % t);
        if k == 0 {
            dm.cinf_lag1[j][s]
        } else {
            dm.ygap[j][s]
        }
    });
    let y = DVector::from_fn(rows, |r, _| dm.pi_core[r / t][r % t]);
    let fit = ols(&x, &y)?;

    let mut h = DMatrix::zeros(t, 2);
    for r in 0..rows {
        let s = r % t;
        for k in 0..2 {
            h[(s, k)] += x[(r, k)] * fit.residuals[r];
        }
    }
    let s_hat = newey_west(&h, bw)?;
    let vcov = &fit.xtx_inv * (s_hat * t as f64) * &fit.xtx_inv;
    let vcov = crate::stats::symmetrize(&vcov);

    let ssr = fit.residuals.norm_squared();
    let sst = y.norm_squared();
    let r2_within = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    let dof = rows as f64 - n as f64 - 2.0;
    let sigma2 = if dof > 0.0 { ssr / dof } else { f64::NAN };
    let (b, xi) = (fit.coef[0], fit.coef[1]);
    let fixed_effects = data
        .countries
        .iter()
        .zip(&dm.means)
        .map(|(c, m)| (c.clone(), m[0] - b * m[1] - xi * m[2]))
        .collect();

    Ok(PanelResult {
        b_hat: b,
        xi_hat: xi,
        dk_se: [vcov[(0, 0)].max(0.0).sqrt(), vcov[(1, 1)].max(0.0).sqrt()],
        vcov: [[vcov[(0, 0)], vcov[(0, 1)]], [vcov[(1, 0)], vcov[(1, 1)]]],
        ols_se: [
            (sigma2 * fit.xtx_inv[(0, 0)]).sqrt(),
            (sigma2 * fit.xtx_inv[(1, 1)]).sqrt(),
        ],
        r2_within,
        fixed_effects,
        bandwidth: bw,
        n_units: n,
        n_periods: t,
        balanced: data.balanced,
        dropped_periods: data.dropped_periods.clone(),
        df: t - 1,
        crit_value: fixed_b_critical_value(bw, t),
        wald_p: None,
    })
}

/// p-value of the chi-square(1) Wald test of `b_hat == external_coef`,
/// treating the two estimates as independent.
pub fn wald_equality(result: &PanelResult, external_coef: f64, external_se: f64) -> Result<f64> {
    let var = result.dk_se[0].powi(2) + external_se.powi(2);
    if !(var.is_finite() && var > 0.0) {
        return Err(IcpcError::invalid(
            "external_se",
            format!("combined variance {var} must be positive"),
        ));
    }
    let stat = (result.b_hat - external_coef).powi(2) / var;
    let chi = ChiSquared::new(1.0).map_err(|e| IcpcError::Degenerate(e.to_string()))?;
    Ok(1.0 - chi.cdf(stat))
}

/// Synthetic panel design. Regressors and errors mix a common factor with
/// country-specific noise; `cinf` is built as the average of two
/// full-sample standardized cost indices, then lagged one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelDgp {
    pub n_units: usize,
    pub t_len: usize,
    pub b: f64,
    pub xi: f64,
    /// Country-specific error standard deviation.
    pub error_sd: f64,
    /// Standard deviation of the error component shared by all countries.
    pub common_error_sd: f64,
    /// Weight of the common factor in the regressors, in `[0, 1]`.
    pub common_regressor_share: f64,
    /// AR(1) persistence of regressor factors.
    pub regressor_persistence: f64,
    pub fixed_effect_sd: f64,
}

impl Default for PanelDgp {
    fn default() -> Self {
        PanelDgp {
            n_units: 7,
            t_len: 52,
            b: 0.094,
            xi: 0.038,
            error_sd: 0.05,
            common_error_sd: 0.0,
            common_regressor_share: 0.5,
            regressor_persistence: 0.7,
            fixed_effect_sd: 0.2,
        }
    }
}

impl PanelDgp {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 || self.t_len < 2 {
            return Err(IcpcError::invalid("n_units/t_len", "need N >= 1 and T >= 2"));
        }
        if !(self.b.is_finite() && self.xi.is_finite()) {
            return Err(IcpcError::invalid("b/xi", "coefficients must be finite"));
        }
        if !(0.0..=1.0).contains(&self.common_regressor_share) {
            return Err(IcpcError::invalid("common_regressor_share", "not in [0,1]"));
        }
        if self.regressor_persistence.abs() >= 1.0 {
            return Err(IcpcError::invalid("regressor_persistence", "not in (-1,1)"));
        }
        for (name, v) in [
            ("error_sd", self.error_sd),
            ("common_error_sd", self.common_error_sd),
            ("fixed_effect_sd", self.fixed_effect_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(IcpcError::invalid(name, format!("{v} must be >= 0")));
            }
        }
        Ok(())
    }
}

// sorted, so labels keep their order through a CSV round trip
const G7: [&str; 7] = ["CAN", "DEU", "FRA", "GBR", "ITA", "JPN", "USA"];

fn month_labels(t_len: usize) -> Vec<String> {
    (0..t_len)
        .map(|k| format!("{:04}-{:02}", 2022 + k / 12, k % 12 + 1))
        .collect()
}

pub fn simulate_panel(dgp: &PanelDgp, seed: u64) -> Result<PanelDataset> {
    dgp.validate()?;
    let (n, t) = (dgp.n_units, dgp.t_len);
    let mut rng = stream_rng(seed, 16);
    let rho = dgp.regressor_persistence;
    let ar1 = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        (0..len)
            .map(|_| {
                let out = x;
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                out
            })
            .collect()
    };
    let w = dgp.common_regressor_share;
    let mix = |common: &[f64], own: &[f64]| -> Vec<f64> {
        common
            .iter()
            .zip(own)
            .map(|(c, o)| w.sqrt() * c + (1.0 - w).sqrt() * o)
            .collect()
    };
    let standardize = |xs: Vec<f64>| -> Vec<f64> {
        let m = crate::stats::mean(&xs);
        let sd = crate::stats::variance(&xs).sqrt();
        xs.iter().map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 }).collect()
    };
    // one extra period so the lagged index covers the first label
    let gpu_common = ar1(t + 1, &mut rng);
    let power_common = ar1(t + 1, &mut rng);
    let gap_common = ar1(t, &mut rng);
    let err_common: Vec<f64> = (0..t)
        .map(|_| dgp.common_error_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let countries: Vec<String> = if n == G7.len() {
        G7.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|j| format!("C{j:04}")).collect()
    };
    let mut pi_core = Vec::with_capacity(n);
    let mut cinf_lag1 = Vec::with_capacity(n);
    let mut ygap = Vec::with_capacity(n);
    for _ in 0..n {
        let gpu = standardize(mix(&gpu_common, &ar1(t + 1, &mut rng)));
        let power = standardize(mix(&power_common, &ar1(t + 1, &mut rng)));
        let cinf: Vec<f64> = gpu.iter().zip(&power).map(|(a, b)| 0.5 * (a + b)).collect();
        let c_lag: Vec<f64> = cinf[..t].to_vec();
        let y = mix(&gap_common, &ar1(t, &mut rng));
        let alpha = dgp.fixed_effect_sd * rng.sample::<f64, _>(StandardNormal);
        let p: Vec<f64> = (0..t)
            .map(|s| {
                alpha
                    + dgp.b * c_lag[s]
                    + dgp.xi * y[s]
                    + err_common[s]
                    + dgp.error_sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        pi_core.push(p);
        cinf_lag1.push(c_lag);
        ygap.push(y);
    }
    Ok(PanelDataset {
        countries,
        periods: month_labels(t),
        pi_core,
        cinf_lag1,
        ygap,
        balanced: true,
        dropped_periods: Vec::new(),
    })
}
