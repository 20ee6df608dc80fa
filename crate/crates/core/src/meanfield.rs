//! Fokker-Planck solver for the cross-sectional log-price density
//!
//! ```text
//! d/dt mu = -d/dp (b mu) + 0.5 sigma_p2 d2/dp2 mu
//! b(mu; ygap, cinf) = kappa*ygap + cost_coef*cinf + beta*E_mu[p] - p
//! ```
//!
//! on a bounded grid with reflecting (zero-flux) walls. The scheme is
//! explicit finite volume: upwind fluxes for the drift and central
//! differences for diffusion, so mass is conserved by telescoping and the
//! CFL bound keeps the density non-negative. One unit of solver time is one
//! model period.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IcpcError, Result};
use crate::formulas::{closed_form_slopes, equilibrium_slopes, ModelParams, SlopePair};
use crate::sim::{
    simulate_firm_panel_with, simulate_shocks, IntensityDistribution, PanelDynamics, PanelOptions,
    ShockPaths, ShockProcessSpec,
};

/// Safety factor in `dt <= CFL * min(dp / max|b|, dp^2 / sigma_p2)`.
pub const CFL: f64 = 0.4;
/// Quantile nodes used for Wasserstein-1 integration.
pub const W1_NODES: usize = 2048;

/// Density values per cell on `[lower, upper]`; `sum(values) * cell_width = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub lower: f64,
    pub upper: f64,
    pub values: Vec<f64>,
    pub dt: f64,
}

impl DensityGrid {
    pub fn new(lower: f64, upper: f64, values: Vec<f64>, dt: f64) -> Result<Self> {
        let g = DensityGrid {
            lower,
            upper,
            values,
            dt,
        };
        g.validate()?;
        Ok(g)
    }

    /// Gaussian `N(mean, variance)` sampled at cell centers and normalized to
    /// unit mass. A zero variance puts all mass in the cell containing `mean`.
    pub fn gaussian(lower: f64, upper: f64, cells: usize, mean: f64, variance: f64, dt: f64) -> Result<Self> {
        if cells < 16 {
            return Err(IcpcError::invalid("cells", format!("{cells} < 16")));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(IcpcError::invalid("bounds", format!("[{lower}, {upper}]")));
        }
        let width = (upper - lower) / cells as f64;
        let mut values = vec![0.0; cells];
        if variance > 0.0 {
            for (j, v) in values.iter_mut().enumerate() {
                let x = lower + (j as f64 + 0.5) * width;
                *v = (-(x - mean).powi(2) / (2.0 * variance)).exp();
            }
        } else {
            let j = (((mean - lower) / width).floor().max(0.0) as usize).min(cells - 1);
            values[j] = 1.0;
        }
        let total: f64 = values.iter().sum::<f64>() * width;
        if !(total > 0.0) {
            return Err(IcpcError::Degenerate("initial density has no mass on the grid".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        DensityGrid::new(lower, upper, values, dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 16 {
            return Err(IcpcError::invalid("cells", format!("{} < 16", self.values.len())));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(IcpcError::invalid("bounds", format!("[{}, {}]", self.lower, self.upper)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IcpcError::invalid("dt", format!("{} must be > 0", self.dt)));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IcpcError::invalid("values", "density must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_width(&self) -> f64 {
        (self.upper - self.lower) / self.values.len() as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lower + (j as f64 + 0.5) * self.cell_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells()).map(|j| self.center(j)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_width()
    }

    pub fn mean(&self) -> f64 {
        let w = self.cell_width();
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| v * w * self.center(j))
            .sum::<f64>()
            / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let w = self.cell_width();
        let m = self.mean();
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| v * w * (self.center(j) - m).powi(2))
            .sum::<f64>()
            / self.mass()
    }

    /// Moves the window by whole cells so that it stays centered on `target`.
    /// Mass leaving the window is added to the new edge cell.
    pub fn recenter(&mut self, target: f64) {
        let w = self.cell_width();
        let mid = 0.5 * (self.lower + self.upper);
        let shift = ((target - mid) / w).round() as i64;
        if shift == 0 {
            return;
        }
        let m = self.cells() as i64;
        let mut out = vec![0.0; self.cells()];
        for (j, v) in self.values.iter().enumerate() {
            let k = (j as i64 - shift).clamp(0, m - 1) as usize;
            out[k] += v;
        }
        self.values = out;
        self.lower += shift as f64 * w;
        self.upper += shift as f64 * w;
    }
}

/// Drift and diffusion inputs of the mean-field equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldConfig {
    pub sigma_p2: f64,
    /// Loading of the drift on the output gap.
    pub kappa: f64,
    /// Loading of the drift on the inference cost.
    pub cost_coef: f64,
    pub beta: f64,
}

impl MeanFieldConfig {
    /// Drift `kappa * ygap + lambda_bar * kappa * cinf`, so the first moment
    /// moves with the base slopes and the cost-to-demand ratio is
    /// `lambda_bar`.
    pub fn from_params(params: &ModelParams, sigma_p2: f64) -> Result<Self> {
        Self::with_slopes(closed_form_slopes(params)?, params.beta, sigma_p2)
    }

    /// Drift loaded with the algorithmic-pricing slopes; this is the mean
    /// drift of the diffusion firm panel when a fraction `phi` of firms is
    /// algorithmic.
    pub fn algorithmic(params: &ModelParams, sigma_p2: f64) -> Result<Self> {
        Self::with_slopes(equilibrium_slopes(params)?, params.beta, sigma_p2)
    }

    fn with_slopes(s: SlopePair, beta: f64, sigma_p2: f64) -> Result<Self> {
        let cfg = MeanFieldConfig {
            sigma_p2,
            kappa: s.kappa,
            cost_coef: s.kappa_inf,
            beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_p2.is_finite() && self.sigma_p2 >= 0.0) {
            return Err(IcpcError::invalid("sigma_p2", format!("{} must be >= 0", self.sigma_p2)));
        }
        if !(self.kappa.is_finite() && self.cost_coef.is_finite()) {
            return Err(IcpcError::invalid("kappa", "drift loadings must be finite"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0 && self.beta < 1.0) {
            return Err(IcpcError::invalid("beta", format!("{} not in (0,1)", self.beta)));
        }
        Ok(())
    }

    /// Constant part of the drift given the current mean.
    fn drift_level(&self, ygap: f64, cinf: f64, mean: f64) -> f64 {
        self.kappa * ygap + self.cost_coef * cinf + self.beta * mean
    }

    /// Stationary variance of the density, `sigma_p2 / 2`.
    pub fn stationary_variance(&self) -> f64 {
        0.5 * self.sigma_p2
    }
}

/// Largest stable step for the given drift bound.
pub fn max_stable_dt(cell_width: f64, max_abs_drift: f64, sigma_p2: f64) -> f64 {
    let adv = if max_abs_drift > 0.0 {
        cell_width / max_abs_drift
    } else {
        f64::INFINITY
    };
    let diff = if sigma_p2 > 0.0 {
        cell_width * cell_width / sigma_p2
    } else {
        f64::INFINITY
    };
    CFL * adv.min(diff)
}

/// One explicit step for an arbitrary drift field evaluated at cell
/// interfaces.
pub fn fp_step_drift(grid: &DensityGrid, sigma_p2: f64, drift: impl Fn(f64) -> f64) -> Result<DensityGrid> {
    grid.validate()?;
    let m = grid.cells();
    let dp = grid.cell_width();
    let b: Vec<f64> = (1..m).map(|j| drift(grid.lower + j as f64 * dp)).collect();
    let max_b = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let limit = max_stable_dt(dp, max_b, sigma_p2);
    if grid.dt > limit * (1.0 + 1e-12) {
        return Err(IcpcError::Stability(format!(
            "dt = {} exceeds {limit} (cell width {dp}, max |b| {max_b}, sigma_p2 {sigma_p2})",
            grid.dt
        )));
    }
    let mu = &grid.values;
    let half_sigma = 0.5 * sigma_p2 / dp;
    // flux[j] is the flux through the interface between cells j and j+1
    let flux: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(j, &bj)| {
            let adv = if bj >= 0.0 { bj * mu[j] } else { bj * mu[j + 1] };
            adv - half_sigma * (mu[j + 1] - mu[j])
        })
        .collect();
    let ratio = grid.dt / dp;
    let values = (0..m)
        .map(|j| {
            let right = if j + 1 < m { flux[j] } else { 0.0 };
            let left = if j > 0 { flux[j - 1] } else { 0.0 };
            mu[j] - ratio * (right - left)
        })
        .collect();
    Ok(DensityGrid {
        values,
        ..grid.clone()
    })
}

/// One step of the mean-field equation for the current shocks.
pub fn fp_step(grid: &DensityGrid, cfg: &MeanFieldConfig, ygap: f64, cinf: f64) -> Result<DensityGrid> {
    cfg.validate()?;
    let level = cfg.drift_level(ygap, cinf, grid.mean());
    fp_step_drift(grid, cfg.sigma_p2, |p| level - p)
}

/// Grid layout for path solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpGridSpec {
    pub cells: usize,
    /// Window half-width in stationary standard deviations.
    pub half_width_sd: f64,
    /// Half-width used when `sigma_p2 = 0`.
    pub min_half_width: f64,
    /// Initial mean of the density.
    pub initial_mean: f64,
}

impl Default for FpGridSpec {
    fn default() -> Self {
        FpGridSpec {
            cells: 256,
            half_width_sd: 6.0,
            min_half_width: 1.0,
            initial_mean: 0.0,
        }
    }
}

/// Stateful solver that advances the density one model period at a time,
/// sub-stepping under the CFL bound and keeping the window centered on the
/// density mean.
#[derive(Debug, Clone)]
pub struct FpSolver {
    pub cfg: MeanFieldConfig,
    pub grid: DensityGrid,
}

impl FpSolver {
    /// Starts from the stationary Gaussian `N(initial_mean, sigma_p2 / 2)`.
    pub fn new(cfg: MeanFieldConfig, spec: &FpGridSpec) -> Result<Self> {
        cfg.validate()?;
        let var = cfg.stationary_variance();
        let half = (spec.half_width_sd * var.sqrt()).max(spec.min_half_width);
        let grid = DensityGrid::gaussian(
            spec.initial_mean - half,
            spec.initial_mean + half,
            spec.cells,
            spec.initial_mean,
            var,
            1.0,
        )?;
        Ok(FpSolver { cfg, grid })
    }

    pub fn advance_period(&mut self, ygap: f64, cinf: f64) -> Result<()> {
        let dp = self.grid.cell_width();
        // the mean moves little within a period; pad the drift bound
        let level = self.cfg.drift_level(ygap, cinf, self.grid.mean());
        let reach = (level - self.grid.lower).abs().max((level - self.grid.upper).abs());
        let dt_max = max_stable_dt(dp, 1.1 * reach + dp, self.cfg.sigma_p2);
        let steps = (1.0 / dt_max).ceil().max(1.0) as usize;
        self.grid.dt = 1.0 / steps as f64;
        for _ in 0..steps {
            self.grid = fp_step(&self.grid, &self.cfg, ygap, cinf)?;
        }
        let m = self.grid.mean();
        self.grid.recenter(m);
        Ok(())
    }
}

/// Mean of the density at the start and after each period; the first
/// difference is mean-field inflation.
#[derive(Debug, Clone)]
pub struct MeanPath {
    pub means: Vec<f64>,
    pub final_grid: DensityGrid,
}

impl MeanPath {
    pub fn inflation(&self) -> Vec<f64> {
        self.means.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub fn fp_mean_path(
    cfg: &MeanFieldConfig,
    shocks: &ShockPaths,
    t_len: usize,
    spec: &FpGridSpec,
) -> Result<MeanPath> {
    if t_len > shocks.len() {
        return Err(IcpcError::InsufficientSample(format!(
            "{t_len} periods requested, {} shock periods supplied",
            shocks.len()
        )));
    }
    let mut solver = FpSolver::new(*cfg, spec)?;
    let mut means = Vec::with_capacity(t_len + 1);
    means.push(solver.grid.mean());
    for t in 0..t_len {
        solver.advance_period(shocks.ygap[t], shocks.cinf[t])?;
        means.push(solver.grid.mean());
    }
    Ok(MeanPath {
        means,
        final_grid: solver.grid,
    })
}

/// Wasserstein-1 distance between the empirical measure of `prices` and the
/// grid density (mass at cell centers), by midpoint integration of
/// `|Q_emp(u) - Q_grid(u)|` over [`W1_NODES`] quantile levels.
pub fn empirical_vs_fp_distance(prices: &[f64], grid: &DensityGrid) -> Result<f64> {
    if prices.is_empty() {
        return Err(IcpcError::InsufficientSample("empty price list".into()));
    }
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(IcpcError::invalid("prices", "non-finite price"));
    }
    let mut sorted = prices.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let w = grid.cell_width();
    let total = grid.mass();
    if !(total > 0.0) {
        return Err(IcpcError::Degenerate("grid carries no mass".into()));
    }
    let mut cdf = Vec::with_capacity(grid.cells());
    let mut acc = 0.0;
    for v in &grid.values {
        acc += v * w / total;
        cdf.push(acc);
    }
    let last = grid.cells() - 1;
    let mut j = 0;
    let mut sum = 0.0;
    for k in 0..W1_NODES {
        let u = (k as f64 + 0.5) / W1_NODES as f64;
        let idx = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
        while j < last && cdf[j] < u {
            j += 1;
        }
        sum += (sorted[idx] - grid.center(j)).abs();
    }
    Ok(sum / W1_NODES as f64)
}

/// Settings for the N-firm versus mean-field comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub n_firms: Vec<usize>,
    pub t_len: usize,
    pub reps: usize,
    pub sigma_p2: f64,
    /// Exact OU sub-steps per period in the firm simulation.
    pub substeps: usize,
    pub grid: FpGridSpec,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            n_firms: vec![100, 1_000, 10_000],
            t_len: 20,
            reps: 5,
            sigma_p2: 0.5,
            substeps: 20,
            grid: FpGridSpec {
                cells: 512,
                ..FpGridSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_firms: usize,
    pub median_w1: f64,
    pub mean_w1: f64,
    pub max_w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// True when the median distance never increases with N.
    pub non_increasing: bool,
}

/// W1 distance between the firm-level empirical price measure and the
/// Fokker-Planck density at every period end, for each panel size.
///
/// Replication `r` uses seed `seed + r` for every N, so all panel sizes face
/// the same shock paths.
pub fn convergence_study(
    params: &ModelParams,
    dist: &IntensityDistribution,
    shocks: &ShockProcessSpec,
    spec: &ConvergenceSpec,
    seed: u64,
) -> Result<ConvergenceReport> {
    if spec.reps == 0 || spec.n_firms.is_empty() {
        return Err(IcpcError::invalid("convergence", "need reps >= 1 and at least one N"));
    }
    let cfg = MeanFieldConfig::algorithmic(params, spec.sigma_p2)?;
    let options = PanelOptions {
        dynamics: PanelDynamics::Diffusion {
            sigma_p2: spec.sigma_p2,
            substeps: spec.substeps,
        },
        initial_dispersion: cfg.stationary_variance().sqrt(),
        reset_dispersion: 0.0,
    };

    // mean-field reference per replication
    let references: Vec<Vec<DensityGrid>> = (0..spec.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<DensityGrid>> {
            let s = seed.wrapping_add(r as u64);
            let paths = simulate_shocks(shocks, spec.t_len, s)?;
            let mut solver = FpSolver::new(cfg, &spec.grid)?;
            let mut out = Vec::with_capacity(spec.t_len);
            for t in 0..spec.t_len {
                solver.advance_period(paths.ygap[t], paths.cinf[t])?;
                out.push(solver.grid.clone());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.n_firms.len());
    for &n in &spec.n_firms {
        let per_rep: Vec<Vec<f64>> = (0..spec.reps)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let s = seed.wrapping_add(r as u64);
                let panel = simulate_firm_panel_with(params, dist, shocks, n, spec.t_len, s, &options)?;
                panel
                    .prices
                    .iter()
                    .zip(&references[r])
                    .map(|(p, g)| empirical_vs_fp_distance(p, g))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut all: Vec<f64> = per_rep.into_iter().flatten().collect();
        all.sort_by(f64::total_cmp);
        let k = all.len();
        let median = if k % 2 == 1 {
            all[k / 2]
        } else {
            0.5 * (all[k / 2 - 1] + all[k / 2])
        };
        rows.push(ConvergenceRow {
            n_firms: n,
            median_w1: median,
            mean_w1: all.iter().sum::<f64>() / k as f64,
            max_w1: all[k - 1],
        });
    }
    let non_increasing = rows.windows(2).all(|w| w[1].median_w1 <= w[0].median_w1);
    Ok(ConvergenceReport { rows, non_increasing })
}

/// OLS of mean-field inflation on a constant, the output gap and the
/// inference cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldRegression {
    pub intercept: f64,
    pub coef_ygap: f64,
    pub coef_cinf: f64,
    /// `coef_cinf / coef_ygap`.
    pub ratio: f64,
}

pub fn mean_field_regression(
    cfg: &MeanFieldConfig,
    shocks: &ShockPaths,
    spec: &FpGridSpec,
) -> Result<MeanFieldRegression> {
    let t = shocks.len();
    let path = fp_mean_path(cfg, shocks, t, spec)?;
    let infl = path.inflation();
    let x = nalgebra::DMatrix::from_fn(t, 3, |i, k| match k {
        0 => 1.0,
        1 => shocks.ygap[i],
        _ => shocks.cinf[i],
    });
    let fit = crate::stats::ols(&x, &nalgebra::DVector::from_vec(infl))?;
    Ok(MeanFieldRegression {
        intercept: fit.coef[0],
        coef_ygap: fit.coef[1],
        coef_cinf: fit.coef[2],
        ratio: fit.coef[2] / fit.coef[1],
    })
}
