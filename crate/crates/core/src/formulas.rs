//! Closed-form quantities of the inference-cost Phillips curve.
//!
//! Everything here is a pure function of a [`ModelParams`] calibration and,
//! where needed, a set of unconditional shock variances. The slopes are
//!
//! ```text
//! kappa      = (1 - theta)(1 - beta*theta) / theta
//! kappa_inf  = lambda_bar * kappa
//! ```
//!
//! and algorithmic price setters of intensity `phi*rho` attenuate the demand
//! slope by `(1 - phi*rho)` while amplifying the inference pass-through by
//! `(1 + phi*rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{IcpcError, Result};

/// Risk aversion used when a calibration leaves `gamma` unset.
pub const DEFAULT_GAMMA: f64 = 2.0;

/// Calibration tuple of the model.
/// Missing fields take their baseline values when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Calvo stickiness, probability a firm keeps its price.
    pub theta: f64,
    /// Discount factor.
    pub beta: f64,
    /// Mean AI intensity of marginal cost.
    pub lambda_bar: f64,
    /// Share of re-setters that delegate pricing to algorithms.
    pub phi: f64,
    /// Near-collusive responsiveness of algorithmic agents.
    pub rho: f64,
    /// Weight on the output gap in the quadratic loss.
    pub omega: f64,
    /// Relative risk aversion.
    pub gamma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ModelParams {
    /// U.S. monthly calibration: theta = 0.75, beta = 0.996, lambda_bar = 0.18,
    /// phi = 0.32, rho = 0.20, omega = 0.50, with gamma at its default.
    pub fn baseline() -> Self {
        ModelParams {
            theta: 0.75,
            beta: 0.996,
            lambda_bar: 0.18,
            phi: 0.32,
            rho: 0.20,
            omega: 0.50,
            gamma: DEFAULT_GAMMA,
        }
    }

    /// Algorithmic pricing intensity `phi * rho`.
    pub fn algorithmic_intensity(&self) -> f64 {
        self.phi * self.rho
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("theta", self.theta)?;
        open_unit("beta", self.beta)?;
        closed_unit("lambda_bar", self.lambda_bar)?;
        closed_unit("phi", self.phi)?;
        if !(self.rho.is_finite() && (0.0..1.0).contains(&self.rho)) {
            return Err(IcpcError::invalid("rho", format!("{} not in [0,1)", self.rho)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0 && self.omega <= 1.0) {
            return Err(IcpcError::invalid(
                "omega",
                format!("{} not in (0,1]", self.omega),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(IcpcError::invalid("gamma", format!("{} not > 0", self.gamma)));
        }
        let x = self.algorithmic_intensity();
        if x >= 1.0 {
            return Err(IcpcError::invalid("phi*rho", format!("{x} must be < 1")));
        }
        Ok(())
    }
}

fn open_unit(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(IcpcError::invalid(name, format!("{v} not in (0,1)")))
    }
}

fn closed_unit(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(IcpcError::invalid(name, format!("{v} not in [0,1]")))
    }
}

/// Output-gap slope and inference pass-through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopePair {
    pub kappa: f64,
    pub kappa_inf: f64,
}

/// Unconditional variances of the inference cost, the output gap and the
/// cost-push shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockMoments {
    pub var_inf: f64,
    pub var_ygap: f64,
    pub var_u: f64,
}

impl ShockMoments {
    pub fn new(var_inf: f64, var_ygap: f64, var_u: f64) -> Self {
        ShockMoments {
            var_inf,
            var_ygap,
            var_u,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("var_inf", self.var_inf),
            ("var_ygap", self.var_ygap),
            ("var_u", self.var_u),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(IcpcError::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub w_cl: f64,
    pub w_ai: f64,
    pub l_inf: f64,
    pub l_alg: f64,
    pub w_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub psi_inf_star: f64,
    pub pi_target: f64,
    pub eta_inf_bound: f64,
}

/// Calvo slopes at the baseline (no algorithmic pricing).
pub fn closed_form_slopes(params: &ModelParams) -> Result<SlopePair> {
    params.validate()?;
    let ModelParams {
        theta,
        beta,
        lambda_bar,
        ..
    } = *params;
    let kappa = (1.0 - theta) * (1.0 - beta * theta) / theta;
    Ok(SlopePair {
        kappa,
        kappa_inf: lambda_bar * kappa,
    })
}

/// Applies the algorithmic attenuation `(1 - phi*rho)` to the demand slope and
/// the amplification `(1 + phi*rho)` to the inference pass-through.
pub fn algorithmic_slopes(params: &ModelParams, base: SlopePair) -> Result<SlopePair> {
    params.validate()?;
    let x = params.algorithmic_intensity();
    Ok(SlopePair {
        kappa: (1.0 - x) * base.kappa,
        kappa_inf: (1.0 + x) * base.kappa_inf,
    })
}

/// Baseline slopes followed by the algorithmic adjustment.
pub fn equilibrium_slopes(params: &ModelParams) -> Result<SlopePair> {
    algorithmic_slopes(params, closed_form_slopes(params)?)
}

/// Additive welfare decomposition `W* = W_cl + W_AI - L_inf - L_alg`.
///
/// `w_cl` and `w_ai` are levels supplied by the caller; only the two losses
/// have closed forms.
pub fn welfare_decomposition(
    params: &ModelParams,
    shocks: &ShockMoments,
    w_cl: f64,
    w_ai: f64,
) -> Result<WelfareReport> {
    shocks.validate()?;
    if !w_cl.is_finite() {
        return Err(IcpcError::invalid("w_cl", "must be finite"));
    }
    if !(w_ai.is_finite() && w_ai >= 0.0) {
        return Err(IcpcError::invalid("w_ai", format!("{w_ai} must be >= 0")));
    }
    let base = closed_form_slopes(params)?;
    let x = params.algorithmic_intensity();
    let l_inf = base.kappa_inf.powi(2) * shocks.var_inf;
    let l_alg = x * (2.0 - x) / (2.0 * (1.0 - x).powi(2)) * base.kappa.powi(2) * shocks.var_ygap;
    Ok(WelfareReport {
        w_cl,
        w_ai,
        l_inf,
        l_alg,
        w_star: w_cl + w_ai - l_inf - l_alg,
    })
}

fn share_of_inference(kappa: f64, kappa_inf: f64, shocks: &ShockMoments) -> Result<f64> {
    let num = kappa_inf.powi(2) * shocks.var_inf;
    let den = kappa.powi(2) * shocks.var_ygap + num + shocks.var_u;
    if den <= 0.0 {
        return Err(IcpcError::Degenerate(
            "all inflation variance contributions are zero".into(),
        ));
    }
    Ok(num / den)
}

/// Upper bound on the share of inflation variance due to inference costs,
/// evaluated at the algorithmic slopes `alg`.
pub fn variance_share_bound(alg: SlopePair, shocks: &ShockMoments) -> Result<f64> {
    shocks.validate()?;
    share_of_inference(alg.kappa, alg.kappa_inf, shocks)
}

/// Welfare-maximizing Taylor-rule response to the inference cost.
pub fn taylor_coefficient(params: &ModelParams) -> Result<f64> {
    let base = closed_form_slopes(params)?;
    Ok((1.0 + params.algorithmic_intensity()) * params.lambda_bar * base.kappa)
}

/// Time-varying optimal inflation target given `E_t[c_inf_{t+1}]`.
pub fn optimal_inflation_target(params: &ModelParams, expected_cinf_next: f64) -> Result<f64> {
    if !expected_cinf_next.is_finite() {
        return Err(IcpcError::invalid("expected_cinf_next", "must be finite"));
    }
    let base = closed_form_slopes(params)?;
    Ok(-params.lambda_bar * base.kappa * expected_cinf_next / (1.0 - params.beta * params.theta))
}

/// Smallest non-negative response coefficient on `c_inf` that keeps the
/// variance-share bound at or below `eta_bar`.
///
/// The indexing coefficient `psi` offsets the pass-through inside the bound,
/// `kappa_inf_eff = max(kappa_inf_alg - psi, 0)`. When the unadjusted bound
/// already satisfies the target the cut-off is zero.
pub fn indexing_cutoff(params: &ModelParams, shocks: &ShockMoments, eta_bar: f64) -> Result<f64> {
    shocks.validate()?;
    if !(eta_bar.is_finite() && (0.0..1.0).contains(&eta_bar)) {
        return Err(IcpcError::invalid("eta_bar", format!("{eta_bar} not in (0,1)")));
    }
    let alg = equilibrium_slopes(params)?;
    let unadjusted = share_of_inference(alg.kappa, alg.kappa_inf, shocks)?;
    if unadjusted <= eta_bar {
        return Ok(0.0);
    }
    // unadjusted > eta_bar >= 0 implies var_inf > 0 and kappa_inf_alg > 0.
    let other = alg.kappa.powi(2) * shocks.var_ygap + shocks.var_u;
    if eta_bar == 0.0 || other <= 0.0 {
        return Err(IcpcError::Infeasible(format!(
            "no finite indexing coefficient brings the inference share to {eta_bar}: \
             remaining variance {other}"
        )));
    }
    let target_pass_through = (eta_bar * other / ((1.0 - eta_bar) * shocks.var_inf)).sqrt();
    Ok((alg.kappa_inf - target_pass_through).max(0.0))
}

/// Consumption-equivalent welfare cost of inference-induced inflation
/// volatility, `0.5 * gamma * kappa_inf_alg^2 * var_inf / (1 - beta*theta)^2`.
pub fn lucas_welfare_cost(params: &ModelParams, var_inf: f64) -> Result<f64> {
    if !(var_inf.is_finite() && var_inf >= 0.0) {
        return Err(IcpcError::invalid("var_inf", format!("{var_inf} must be >= 0")));
    }
    let alg = equilibrium_slopes(params)?;
    Ok(0.5 * params.gamma * alg.kappa_inf.powi(2) * var_inf
        / (1.0 - params.beta * params.theta).powi(2))
}

/// Policy quantities for one calibration.
pub fn policy_report(
    params: &ModelParams,
    shocks: &ShockMoments,
    expected_cinf_next: f64,
) -> Result<PolicyReport> {
    let alg = equilibrium_slopes(params)?;
    Ok(PolicyReport {
        psi_inf_star: taylor_coefficient(params)?,
        pi_target: optimal_inflation_target(params, expected_cinf_next)?,
        eta_inf_bound: variance_share_bound(alg, shocks)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn with(f: impl FnOnce(&mut ModelParams)) -> ModelParams {
        let mut p = ModelParams::baseline();
        f(&mut p);
        p
    }

    // Frozen values below were computed with 30-digit mpmath arithmetic.
    #[test]
    fn baseline_slopes() {
        let s = closed_form_slopes(&ModelParams::baseline()).unwrap();
        assert_relative_eq!(s.kappa, 0.084_333_333_333_333_33, max_relative = 1e-14);
        assert_relative_eq!(s.kappa_inf, 0.015_18, max_relative = 1e-14);
        let a = algorithmic_slopes(&ModelParams::baseline(), s).unwrap();
        assert_relative_eq!(a.kappa, 0.078_936, max_relative = 1e-14);
        assert_relative_eq!(a.kappa_inf, 0.016_151_52, max_relative = 1e-14);
    }

    #[test]
    fn kappa_at_half_stickiness() {
        let s = closed_form_slopes(&with(|p| {
            p.theta = 0.5;
            p.beta = 0.99;
        }))
        .unwrap();
        assert_relative_eq!(s.kappa, 0.505, max_relative = 1e-14);
    }

    #[test]
    fn zero_intensity_kills_pass_through() {
        let p = with(|p| p.lambda_bar = 0.0);
        assert_eq!(closed_form_slopes(&p).unwrap().kappa_inf, 0.0);
        assert_eq!(taylor_coefficient(&p).unwrap(), 0.0);
        assert_eq!(optimal_inflation_target(&p, 1.0).unwrap(), 0.0);
        assert_eq!(lucas_welfare_cost(&p, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn algorithmic_identity_at_zero() {
        let p = with(|p| p.phi = 0.0);
        let base = closed_form_slopes(&p).unwrap();
        assert_eq!(algorithmic_slopes(&p, base).unwrap(), base);
    }

    #[test]
    fn rejects_boundary_and_out_of_range() {
        for p in [
            with(|p| p.theta = 0.0),
            with(|p| p.theta = 1.0),
            with(|p| p.beta = 1.0),
            with(|p| p.lambda_bar = 1.2),
            with(|p| p.rho = 1.0),
            with(|p| p.omega = 0.0),
            with(|p| p.gamma = 0.0),
            with(|p| p.theta = f64::NAN),
        ] {
            assert!(matches!(
                closed_form_slopes(&p),
                Err(IcpcError::InvalidParameter { .. })
            ));
        }
    }

    #[test]
    fn welfare_values() {
        let shocks = ShockMoments::new(1.0, 1.0, 1.0);
        let w = welfare_decomposition(&ModelParams::baseline(), &shocks, 0.0, 0.0).unwrap();
        assert_relative_eq!(w.l_inf, 2.304_324e-4, max_relative = 1e-12);
        assert_relative_eq!(w.l_alg, 5.029_237_749_693_590e-4, max_relative = 1e-12);
        assert_eq!(w.w_star, -w.l_inf - w.l_alg);

        let doubled = welfare_decomposition(
            &ModelParams::baseline(),
            &ShockMoments::new(2.0, 1.0, 1.0),
            0.0,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(doubled.l_inf, 2.0 * w.l_inf, max_relative = 1e-15);
        assert_eq!(doubled.l_alg, w.l_alg);
    }

    #[test]
    fn welfare_collapses_without_ai() {
        let p = with(|p| {
            p.lambda_bar = 0.0;
            p.phi = 0.0;
        });
        let w = welfare_decomposition(&p, &ShockMoments::new(3.0, 2.0, 1.0), -1.5, 0.25).unwrap();
        assert_eq!(w.l_inf, 0.0);
        assert_eq!(w.l_alg, 0.0);
        assert_eq!(w.w_star, -1.25);
    }

    #[test]
    fn welfare_rejects_bad_inputs() {
        let p = ModelParams::baseline();
        assert!(welfare_decomposition(&p, &ShockMoments::new(-1.0, 1.0, 1.0), 0.0, 0.0).is_err());
        assert!(welfare_decomposition(&p, &ShockMoments::new(1.0, 1.0, 1.0), 0.0, -0.1).is_err());
    }

    #[test]
    fn variance_share_edges() {
        let alg = equilibrium_slopes(&ModelParams::baseline()).unwrap();
        assert_eq!(
            variance_share_bound(alg, &ShockMoments::new(2.0, 0.0, 0.0)).unwrap(),
            1.0
        );
        assert_eq!(
            variance_share_bound(alg, &ShockMoments::new(0.0, 1.0, 1.0)).unwrap(),
            0.0
        );
        assert_relative_eq!(
            variance_share_bound(alg, &ShockMoments::new(1.0, 1.0, 1.0)).unwrap(),
            2.591_890_045_407_578_5e-4,
            max_relative = 1e-12
        );
        assert!(matches!(
            variance_share_bound(alg, &ShockMoments::new(0.0, 0.0, 0.0)),
            Err(IcpcError::Degenerate(_))
        ));
    }

    #[test]
    fn policy_values() {
        let p = ModelParams::baseline();
        assert_relative_eq!(taylor_coefficient(&p).unwrap(), 0.016_151_52, max_relative = 1e-14);
        assert_relative_eq!(optimal_inflation_target(&p, 1.0).unwrap(), -0.06, max_relative = 1e-13);
        assert_relative_eq!(optimal_inflation_target(&p, -1.0).unwrap(), 0.06, max_relative = 1e-13);
        let no_alg = with(|p| p.rho = 0.0);
        let base = closed_form_slopes(&no_alg).unwrap();
        assert_relative_eq!(
            taylor_coefficient(&no_alg).unwrap(),
            no_alg.lambda_bar * base.kappa,
            max_relative = 1e-15
        );
    }

    #[test]
    fn lucas_values() {
        let p = ModelParams::baseline();
        assert_relative_eq!(lucas_welfare_cost(&p, 1.0).unwrap(), 4.075_545_6e-3, max_relative = 1e-12);
        let g4 = with(|p| p.gamma = 4.0);
        assert_relative_eq!(
            lucas_welfare_cost(&g4, 1.0).unwrap(),
            2.0 * lucas_welfare_cost(&p, 1.0).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn indexing_cutoff_cases() {
        let p = ModelParams::baseline();
        let shocks = ShockMoments::new(1.0, 1.0, 1.0);
        let alg = equilibrium_slopes(&p).unwrap();
        let unadjusted = variance_share_bound(alg, &shocks).unwrap();
        assert_eq!(indexing_cutoff(&p, &shocks, unadjusted).unwrap(), 0.0);
        // mpmath: kappa_inf_alg - sqrt(1e-4 * (kappa_alg^2 + 1) / (1 - 1e-4))
        assert_relative_eq!(
            indexing_cutoff(&p, &shocks, 1e-4).unwrap(),
            0.006_119_912_326_010_128,
            max_relative = 1e-12
        );
        assert!(matches!(
            indexing_cutoff(&p, &shocks, 0.0),
            Err(IcpcError::Infeasible(_))
        ));
        assert!(matches!(
            indexing_cutoff(&p, &ShockMoments::new(1.0, 0.0, 0.0), 0.5),
            Err(IcpcError::Infeasible(_))
        ));
        assert!(indexing_cutoff(&p, &shocks, 1.0).is_err());
    }

    #[test]
    fn indexing_cutoff_monotone_on_grid() {
        let shocks = ShockMoments::new(50.0, 1.0, 0.5);
        let eta = 0.05;
        let mut prev = 0.0;
        for i in 0..=100 {
            let lb = i as f64 / 100.0;
            let c = indexing_cutoff(&with(|p| p.lambda_bar = lb), &shocks, eta).unwrap();
            assert!(c >= prev, "lambda_bar {lb}: {c} < {prev}");
            prev = c;
        }
        assert!(prev > 0.0);
        let mut prev = 0.0;
        for i in 0..=99 {
            let rho = i as f64 / 100.0;
            let c = indexing_cutoff(
                &with(|p| {
                    p.phi = 1.0;
                    p.rho = rho;
                }),
                &shocks,
                eta,
            )
            .unwrap();
            assert!(c >= prev, "rho {rho}: {c} < {prev}");
            prev = c;
        }
        let low = indexing_cutoff(&with(|p| p.lambda_bar = 0.1), &shocks, eta).unwrap();
        let high = indexing_cutoff(&with(|p| p.lambda_bar = 0.3), &shocks, eta).unwrap();
        assert!(high >= low);
    }
}
