//! Synthetic economies: AR(1) shock processes, the aggregate inflation
//! equation solved forward, and an N-firm Calvo panel with heterogeneous AI
//! intensities and algorithmic price setters.
//!
//! All draws come from ChaCha8 generators seeded with the caller's seed, with
//! one stream per random component, so a given seed always reproduces the
//! same data bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{IcpcError, Result};
use crate::formulas::{equilibrium_slopes, ModelParams, SlopePair};

const STREAM_YGAP: u64 = 0;
const STREAM_CINF: u64 = 1;
const STREAM_U: u64 = 2;
const STREAM_EXPECTATION: u64 = 3;
const STREAM_FIRMS: u64 = 4;
const STREAM_INTENSITY: u64 = 5;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cross-sectional distribution of AI intensities on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityDistribution {
    PointMass { value: f64 },
    Uniform { low: f64, high: f64 },
    TwoPoint { low: f64, high: f64, p_high: f64 },
    /// Beta(alpha, beta) restricted to `[low, high]`.
    TruncatedBeta {
        alpha: f64,
        beta: f64,
        low: f64,
        high: f64,
    },
}

impl IntensityDistribution {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &'static str, v: f64| -> Result<()> {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(IcpcError::invalid(name, format!("{v} not in [0,1]")))
            }
        };
        match *self {
            IntensityDistribution::PointMass { value } => in_unit("value", value),
            IntensityDistribution::Uniform { low, high } => {
                in_unit("low", low)?;
                in_unit("high", high)?;
                if low > high {
                    return Err(IcpcError::invalid("low", format!("{low} > high {high}")));
                }
                Ok(())
            }
            IntensityDistribution::TwoPoint { low, high, p_high } => {
                in_unit("low", low)?;
                in_unit("high", high)?;
                in_unit("p_high", p_high)
            }
            IntensityDistribution::TruncatedBeta {
                alpha,
                beta,
                low,
                high,
            } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(IcpcError::invalid("alpha", format!("{alpha} must be > 0")));
                }
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(IcpcError::invalid("beta", format!("{beta} must be > 0")));
                }
                in_unit("low", low)?;
                in_unit("high", high)?;
                if low >= high {
                    return Err(IcpcError::invalid("low", format!("{low} >= high {high}")));
                }
                if beta_reg(alpha, beta, high) - beta_reg(alpha, beta, low) <= 0.0 {
                    return Err(IcpcError::invalid(
                        "low",
                        "truncation window carries no probability mass",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Closed-form mean `lambda_bar`.
    pub fn mean(&self) -> f64 {
        match *self {
            IntensityDistribution::PointMass { value } => value,
            IntensityDistribution::Uniform { low, high } => 0.5 * (low + high),
            IntensityDistribution::TwoPoint { low, high, p_high } => {
                (1.0 - p_high) * low + p_high * high
            }
            IntensityDistribution::TruncatedBeta {
                alpha,
                beta,
                low,
                high,
            } => {
                let mass = beta_reg(alpha, beta, high) - beta_reg(alpha, beta, low);
                let first = beta_reg(alpha + 1.0, beta, high) - beta_reg(alpha + 1.0, beta, low);
                alpha / (alpha + beta) * first / mass
            }
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            IntensityDistribution::PointMass { value } => value,
            IntensityDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            IntensityDistribution::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
            IntensityDistribution::TruncatedBeta {
                alpha,
                beta,
                low,
                high,
            } => {
                let (cl, ch) = (beta_reg(alpha, beta, low), beta_reg(alpha, beta, high));
                let target = cl + (ch - cl) * rng.random::<f64>();
                // inverse CDF by bisection; the regularized incomplete beta is monotone
                let (mut lo, mut hi) = (low, high);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if beta_reg(alpha, beta, mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

fn draw_intensities(
    dist: &IntensityDistribution,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    (0..n).map(|_| dist.draw(rng)).collect()
}

pub fn sample_intensities(dist: &IntensityDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    if n == 0 {
        return Err(IcpcError::invalid("n", "need at least one draw"));
    }
    let mut rng = stream_rng(seed, STREAM_INTENSITY);
    Ok(draw_intensities(dist, n, &mut rng))
}

/// Mean-zero AR(1) process `x_t = persistence * x_{t-1} + innovation_sd * e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ar1Spec {
    pub persistence: f64,
    pub innovation_sd: f64,
}

impl Ar1Spec {
    pub fn new(persistence: f64, innovation_sd: f64) -> Self {
        Ar1Spec {
            persistence,
            innovation_sd,
        }
    }

    pub fn stationary_variance(&self) -> f64 {
        self.innovation_sd.powi(2) / (1.0 - self.persistence.powi(2))
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.persistence.is_finite() && self.persistence.abs() < 1.0) {
            return Err(IcpcError::invalid(
                name,
                format!("persistence {} not in (-1,1)", self.persistence),
            ));
        }
        if !(self.innovation_sd.is_finite() && self.innovation_sd >= 0.0) {
            return Err(IcpcError::invalid(
                name,
                format!("innovation_sd {} must be >= 0", self.innovation_sd),
            ));
        }
        Ok(())
    }

    fn simulate(&self, t_len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(t_len);
        let mut x = self.stationary_variance().sqrt() * rng.sample::<f64, _>(StandardNormal);
        for _ in 0..t_len {
            out.push(x);
            x = self.persistence * x + self.innovation_sd * rng.sample::<f64, _>(StandardNormal);
        }
        out
    }
}

/// Output gap, inference cost and cost-push processes plus the measurement
/// noise on reported expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockProcessSpec {
    pub ygap: Ar1Spec,
    pub cinf: Ar1Spec,
    pub u: Ar1Spec,
    #[serde(default)]
    pub expectation_noise_sd: f64,
}

impl Default for ShockProcessSpec {
    fn default() -> Self {
        ShockProcessSpec {
            ygap: Ar1Spec::new(0.90, 1.0),
            cinf: Ar1Spec::new(0.95, 1.0),
            u: Ar1Spec::new(0.30, 1.0),
            expectation_noise_sd: 0.0,
        }
    }
}

impl ShockProcessSpec {
    /// Default persistences for the output gap and inference cost with a
    /// serially uncorrelated cost-push shock, so that lagged inflation is a
    /// valid instrument.
    pub fn estimation_default() -> Self {
        ShockProcessSpec {
            u: Ar1Spec::new(0.0, 1.0),
            ..Self::default()
        }
    }

    /// Estimation design with a small cost-push shock (sd 0.05), giving
    /// per-window pass-through estimates precise enough for a log-log fit.
    pub fn scaling_default() -> Self {
        ShockProcessSpec {
            u: Ar1Spec::new(0.0, 0.05),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ygap.validate("ygap")?;
        self.cinf.validate("cinf")?;
        self.u.validate("u")?;
        if !(self.expectation_noise_sd.is_finite() && self.expectation_noise_sd >= 0.0) {
            return Err(IcpcError::invalid(
                "expectation_noise_sd",
                format!("{} must be >= 0", self.expectation_noise_sd),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockPaths {
    pub ygap: Vec<f64>,
    pub cinf: Vec<f64>,
    pub u: Vec<f64>,
}

impl ShockPaths {
    pub fn len(&self) -> usize {
        self.ygap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ygap.is_empty()
    }
}

/// Draws the three shock paths, each started from its stationary law and
/// driven by its own independent innovation stream.
pub fn simulate_shocks(spec: &ShockProcessSpec, t_len: usize, seed: u64) -> Result<ShockPaths> {
    spec.validate()?;
    if t_len == 0 {
        return Err(IcpcError::invalid("t_len", "need at least one period"));
    }
    Ok(ShockPaths {
        ygap: spec.ygap.simulate(t_len, &mut stream_rng(seed, STREAM_YGAP)),
        cinf: spec.cinf.simulate(t_len, &mut stream_rng(seed, STREAM_CINF)),
        u: spec.u.simulate(t_len, &mut stream_rng(seed, STREAM_U)),
    })
}

/// Aligned monthly series. `pi_e[t]` is the expectation of `pi[t+1]` formed
/// at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub periods: Vec<String>,
    pub pi: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub ygap: Vec<f64>,
    pub cinf: Vec<f64>,
    pub u: Option<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.pi.len();
        let lens = [
            ("periods", self.periods.len()),
            ("pi_e", self.pi_e.len()),
            ("ygap", self.ygap.len()),
            ("cinf", self.cinf.len()),
            ("u", self.u.as_ref().map_or(t, Vec::len)),
        ];
        for (name, len) in lens {
            if len != t {
                return Err(IcpcError::Misaligned(format!(
                    "column `{name}` has {len} rows, `pi` has {t}"
                )));
            }
        }
        let cols = [&self.pi, &self.pi_e, &self.ygap, &self.cinf];
        if cols.iter().any(|c| c.iter().any(|v| !v.is_finite()))
            || self.u.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(IcpcError::Misaligned("non-finite value in dataset".into()));
        }
        Ok(())
    }
}

pub(crate) fn period_labels(t_len: usize) -> Vec<String> {
    (1..=t_len).map(|t| t.to_string()).collect()
}

/// Loadings of inflation on the current shocks in the forward solution of
/// `pi_t = beta E_t pi_{t+1} + kappa ygap_t + kappa_inf cinf_t + u_t` under
/// AR(1) shocks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ForwardLoadings {
    pub ygap: f64,
    pub cinf: f64,
    pub u: f64,
}

impl ForwardLoadings {
    pub fn new(slopes: SlopePair, beta: f64, spec: &ShockProcessSpec) -> Self {
        ForwardLoadings {
            ygap: slopes.kappa / (1.0 - beta * spec.ygap.persistence),
            cinf: slopes.kappa_inf / (1.0 - beta * spec.cinf.persistence),
            u: 1.0 / (1.0 - beta * spec.u.persistence),
        }
    }
}

fn model_expectation(
    load: ForwardLoadings,
    spec: &ShockProcessSpec,
    shocks: &ShockPaths,
    t: usize,
) -> f64 {
    load.ygap * spec.ygap.persistence * shocks.ygap[t]
        + load.cinf * spec.cinf.persistence * shocks.cinf[t]
        + load.u * spec.u.persistence * shocks.u[t]
}

fn expectation_column(
    load: ForwardLoadings,
    spec: &ShockProcessSpec,
    shocks: &ShockPaths,
    seed: u64,
) -> Vec<f64> {
    let mut noise_rng = stream_rng(seed, STREAM_EXPECTATION);
    (0..shocks.len())
        .map(|t| {
            let noise = if spec.expectation_noise_sd > 0.0 {
                spec.expectation_noise_sd * noise_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            model_expectation(load, spec, shocks, t) + noise
        })
        .collect()
}

/// Aggregate economy at the algorithmic slopes implied by `params`.
///
/// With zero expectation noise the generated data satisfy the inflation
/// equation with residual exactly `u_t`.
pub fn simulate_aggregate(
    params: &ModelParams,
    spec: &ShockProcessSpec,
    t_len: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let slopes = equilibrium_slopes(params)?;
    if t_len < 2 {
        return Err(IcpcError::invalid("t_len", format!("{t_len} < 2")));
    }
    let shocks = simulate_shocks(spec, t_len, seed)?;
    let load = ForwardLoadings::new(slopes, params.beta, spec);
    let pi = (0..t_len)
        .map(|t| load.ygap * shocks.ygap[t] + load.cinf * shocks.cinf[t] + load.u * shocks.u[t])
        .collect();
    let pi_e = expectation_column(load, spec, &shocks, seed);
    Ok(TimeSeriesDataset {
        periods: period_labels(t_len),
        pi,
        pi_e,
        ygap: shocks.ygap,
        cinf: shocks.cinf,
        u: Some(shocks.u),
    })
}

/// How firm prices move between periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PanelDynamics {
    /// Calvo: each period a Bernoulli(1 - theta) subset resets its price.
    Calvo,
    /// Every firm relaxes toward its own target
    /// `d_i kappa ygap + e_i lambda_i kappa cinf + beta * mean(p)` at unit rate
    /// with idiosyncratic diffusion `sigma_p2`, integrated with `substeps`
    /// exact Ornstein-Uhlenbeck transitions per period.
    Diffusion { sigma_p2: f64, substeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelOptions {
    pub dynamics: PanelDynamics,
    /// Standard deviation of initial log prices around zero.
    #[serde(default)]
    pub initial_dispersion: f64,
    /// Standard deviation of idiosyncratic noise added to Calvo reset prices.
    #[serde(default)]
    pub reset_dispersion: f64,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            dynamics: PanelDynamics::Calvo,
            initial_dispersion: 0.0,
            reset_dispersion: 0.0,
        }
    }
}

impl PanelOptions {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial_dispersion", self.initial_dispersion),
            ("reset_dispersion", self.reset_dispersion),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(IcpcError::invalid(name, format!("{v} must be >= 0")));
            }
        }
        if let PanelDynamics::Diffusion { sigma_p2, substeps } = self.dynamics {
            if !(sigma_p2.is_finite() && sigma_p2 >= 0.0) {
                return Err(IcpcError::invalid("sigma_p2", format!("{sigma_p2} must be >= 0")));
            }
            if substeps == 0 {
                return Err(IcpcError::invalid("substeps", "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FirmPanel {
    pub lambdas: Vec<f64>,
    pub algorithmic: Vec<bool>,
    pub initial_prices: Vec<f64>,
    /// `prices[t][i]`: log price of firm `i` at the end of period `t`.
    pub prices: Vec<Vec<f64>>,
    /// Number of firms that re-priced in each period (Calvo only).
    pub resetters: Vec<usize>,
    pub dataset: TimeSeriesDataset,
}

impl FirmPanel {
    pub fn mean_price_path(&self) -> Vec<f64> {
        self.prices.iter().map(|p| crate::stats::mean(p)).collect()
    }
}

/// Calvo firm panel with default options.
pub fn simulate_firm_panel(
    params: &ModelParams,
    dist: &IntensityDistribution,
    spec: &ShockProcessSpec,
    n_firms: usize,
    t_len: usize,
    seed: u64,
) -> Result<FirmPanel> {
    simulate_firm_panel_with(params, dist, spec, n_firms, t_len, seed, &PanelOptions::default())
}

/// N-firm economy whose marginal cost is `ygap_t + lambda_i * cinf_t`.
///
/// Under Calvo dynamics a re-setter moves to
/// `mean(p_{t-1}) + g_i / (1 - theta)` where the reset gap `g_i` loads the
/// firm's demand and cost terms with the forward-solution discounting of the
/// AR(1) shocks. Algorithmic firms scale the demand term by `1 - rho` and
/// the cost term by `1 + rho`, so the cross-firm average reproduces the
/// aggregate inflation of [`simulate_aggregate`] in expectation.
pub fn simulate_firm_panel_with(
    params: &ModelParams,
    dist: &IntensityDistribution,
    spec: &ShockProcessSpec,
    n_firms: usize,
    t_len: usize,
    seed: u64,
    options: &PanelOptions,
) -> Result<FirmPanel> {
    params.validate()?;
    dist.validate()?;
    options.validate()?;
    if n_firms < 2 {
        return Err(IcpcError::invalid("n_firms", format!("{n_firms} < 2")));
    }
    if t_len < 2 {
        return Err(IcpcError::invalid("t_len", format!("{t_len} < 2")));
    }
    let shocks = simulate_shocks(spec, t_len, seed)?;
    let base = crate::formulas::closed_form_slopes(params)?;
    let kappa = base.kappa;

    let lambdas = draw_intensities(dist, n_firms, &mut stream_rng(seed, STREAM_INTENSITY));
    let mut rng = stream_rng(seed, STREAM_FIRMS);
    let algorithmic: Vec<bool> = (0..n_firms).map(|_| rng.random::<f64>() < params.phi).collect();
    let demand_scale: Vec<f64> = algorithmic
        .iter()
        .map(|&a| if a { 1.0 - params.rho } else { 1.0 })
        .collect();
    let cost_scale: Vec<f64> = algorithmic
        .iter()
        .zip(&lambdas)
        .map(|(&a, &l)| if a { (1.0 + params.rho) * l } else { l })
        .collect();
    let initial_prices: Vec<f64> = (0..n_firms)
        .map(|_| options.initial_dispersion * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut prices = Vec::with_capacity(t_len);
    let mut resetters = Vec::with_capacity(t_len);
    let mut current = initial_prices.clone();
    let mut pi = Vec::with_capacity(t_len);

    match options.dynamics {
        PanelDynamics::Calvo => {
            let load_y = kappa / (1.0 - params.beta * spec.ygap.persistence);
            let load_c = kappa / (1.0 - params.beta * spec.cinf.persistence);
            let load_u = 1.0 / (1.0 - params.beta * spec.u.persistence);
            let reset_prob = 1.0 - params.theta;
            for t in 0..t_len {
                let prev_mean = crate::stats::mean(&current);
                let mut count = 0;
                for i in 0..n_firms {
                    let resets = rng.random::<f64>() < reset_prob;
                    let noise = if options.reset_dispersion > 0.0 {
                        options.reset_dispersion * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    if resets {
                        let gap = demand_scale[i] * load_y * shocks.ygap[t]
                            + cost_scale[i] * load_c * shocks.cinf[t]
                            + load_u * shocks.u[t];
                        current[i] = prev_mean + gap / reset_prob + noise;
                        count += 1;
                    }
                }
                pi.push(crate::stats::mean(&current) - prev_mean);
                resetters.push(count);
                prices.push(current.clone());
            }
        }
        PanelDynamics::Diffusion { sigma_p2, substeps } => {
            let h = 1.0 / substeps as f64;
            let decay = (-h).exp();
            let noise_sd = (sigma_p2 * (1.0 - (-2.0 * h).exp()) / 2.0).sqrt();
            for t in 0..t_len {
                let start_mean = crate::stats::mean(&current);
                for _ in 0..substeps {
                    let m = crate::stats::mean(&current);
                    for i in 0..n_firms {
                        let target = demand_scale[i] * kappa * shocks.ygap[t]
                            + cost_scale[i] * kappa * shocks.cinf[t]
                            + params.beta * m;
                        let z: f64 = rng.sample(StandardNormal);
                        current[i] = current[i] * decay + target * (1.0 - decay) + noise_sd * z;
                    }
                }
                pi.push(crate::stats::mean(&current) - start_mean);
                resetters.push(n_firms);
                prices.push(current.clone());
            }
        }
    }

    let slopes = equilibrium_slopes(params)?;
    let load = ForwardLoadings::new(slopes, params.beta, spec);
    let pi_e = expectation_column(load, spec, &shocks, seed);
    Ok(FirmPanel {
        lambdas,
        algorithmic,
        initial_prices,
        prices,
        resetters,
        dataset: TimeSeriesDataset {
            periods: period_labels(t_len),
            pi,
            pi_e,
            ygap: shocks.ygap,
            cinf: shocks.cinf,
            u: Some(shocks.u),
        },
    })
}
