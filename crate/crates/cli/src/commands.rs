use std::path::Path;

use icpc_core::formulas::{
    closed_form_slopes, equilibrium_slopes, indexing_cutoff, lucas_welfare_cost, policy_report,
    welfare_decomposition,
};
use icpc_core::gmm::{consistency_study_with, derived_estimates, two_step_gmm_with};
use icpc_core::io::{
    fmt6, format_table, load_panel_csv, load_timeseries_csv, write_density, write_panel, write_timeseries,
    ExperimentConfig,
};
use icpc_core::meanfield::{convergence_study, mean_field_regression, FpSolver, MeanFieldConfig};
use icpc_core::panel::{driscoll_kraay, simulate_panel, wald_equality};
use icpc_core::scaling::scaling_experiment_with;
use icpc_core::sim::{simulate_aggregate, simulate_firm_panel, simulate_shocks, ShockProcessSpec};
use icpc_core::IcpcError;
use serde_json::json;

use crate::{Failure, Report, SimKind};

type Outcome = Result<Report, Failure>;

fn to_json<T: serde::Serialize>(value: &T) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(value).map_err(|e| Failure::Runtime(e.to_string()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> icpc_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

// Unreadable input files are the caller's mistake, not a runtime failure.
fn input_error(path: &Path) -> impl Fn(IcpcError) -> Failure + '_ {
    move |e| match e {
        IcpcError::Io(io) => Failure::Validation(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    }
}

pub fn simulate(config: &mut ExperimentConfig, kind: SimKind, t_len: Option<usize>, n_firms: Option<usize>) -> Outcome {
    if let Some(t) = t_len {
        config.run.t_len = t;
        config.panel.t_len = t;
    }
    if let Some(n) = n_firms {
        config.run.n_firms = n;
    }
    config.validate()?;
    let seed = config.run.seed;
    let spec = config.shocks_or(ShockProcessSpec::default());
    let (file, bytes, rows) = match kind {
        SimKind::Aggregate => {
            let data = simulate_aggregate(&config.model, &spec, config.run.t_len, seed)?;
            ("timeseries.csv", csv_bytes(|b| write_timeseries(b, &data))?, data.len())
        }
        SimKind::Firms => {
            let panel = simulate_firm_panel(&config.model, &config.intensity, &spec, config.run.n_firms, config.run.t_len, seed)?;
            ("timeseries.csv", csv_bytes(|b| write_timeseries(b, &panel.dataset))?, panel.dataset.len())
        }
        SimKind::Panel => {
            let data = simulate_panel(&config.panel, seed)?;
            let rows = data.n_units() * data.n_periods();
            ("panel.csv", csv_bytes(|b| write_panel(b, &data))?, rows)
        }
    };
    let json = json!({ "kind": format!("{kind:?}").to_lowercase(), "file": file, "rows": rows, "seed": seed });
    Ok(Report {
        name: "simulate",
        text: format!("wrote {rows} rows to {file} (seed {seed})\n"),
        json,
        files: vec![(file.to_string(), bytes)],
    })
}

pub fn estimate(config: &ExperimentConfig, path: &Path) -> Outcome {
    config.validate()?;
    let data = load_timeseries_csv(path).map_err(input_error(path))?;
    let spec = config.estimator.instruments();
    let beta = config.model.beta;
    let fit = two_step_gmm_with(&data, &spec, beta, &config.estimator.options())?;
    let derived = derived_estimates(&fit, &data, &spec, beta, Some(config.model.lambda_bar))?;
    let mut json = to_json(&fit)?;
    json["derived"] = to_json(&derived)?;

    let mut rows = vec![
        ("kappa_hat", fit.kappa_hat),
        ("kappa_hat_se", fit.hac_se[0]),
        ("kappa_inf_hat", fit.kappa_inf_hat),
        ("kappa_inf_hat_se", fit.hac_se[1]),
        ("eta_inf_hat", derived.eta_inf_hat),
        ("eta_inf_se", derived.eta_inf_se),
        ("j_stat", fit.j_stat),
    ];
    if let Some(p) = fit.j_pvalue {
        rows.push(("j_pvalue", p));
    }
    if let (Some(x), Some(se)) = (derived.phi_rho_hat, derived.phi_rho_se) {
        rows.push(("phi_rho_hat", x));
        rows.push(("phi_rho_se", se));
    }
    let mut text = format_table("two-step GMM", &rows);
    text.push_str(&format!(
        "  T_eff = {}, instruments = {}, bandwidth = {}, J df = {}\n",
        fit.n_obs, fit.n_instruments, fit.bandwidth, fit.j_df
    ));
    Ok(Report {
        name: "estimate",
        json,
        text,
        files: Vec::new(),
    })
}

pub fn panel(config: &ExperimentConfig, path: Option<&Path>) -> Outcome {
    config.validate()?;
    let mut files = Vec::new();
    let data = match path {
        Some(p) => load_panel_csv(p).map_err(input_error(p))?,
        None => {
            let d = simulate_panel(&config.panel, config.run.seed)?;
            files.push(("panel_data.csv".to_string(), csv_bytes(|b| write_panel(b, &d))?));
            d
        }
    };
    let mut fit = driscoll_kraay(&data, config.estimator.bandwidth)?;
    if let (Some(coef), Some(se)) = (config.run.wald_coef, config.run.wald_se) {
        fit.wald_p = Some(wald_equality(&fit, coef, se)?);
    }
    let mut rows = vec![
        ("b_hat", fit.b_hat),
        ("b_dk_se", fit.dk_se[0]),
        ("xi_hat", fit.xi_hat),
        ("xi_dk_se", fit.dk_se[1]),
        ("r2_within", fit.r2_within),
        ("crit_value", fit.crit_value),
    ];
    if let Some(p) = fit.wald_p {
        rows.push(("wald_p", p));
    }
    let mut text = format_table("within-group regression", &rows);
    text.push_str(&format!(
        "  N = {}, T = {}, bandwidth = {}, balanced = {}\n",
        fit.n_units, fit.n_periods, fit.bandwidth, fit.balanced
    ));
    if !fit.dropped_periods.is_empty() {
        text.push_str(&format!("  dropped periods: {}\n", fit.dropped_periods.join(", ")));
    }
    Ok(Report {
        name: "panel",
        json: to_json(&fit)?,
        text,
        files,
    })
}

pub fn scaling(config: &ExperimentConfig) -> Outcome {
    config.validate()?;
    let r = &config.run;
    let spec = config.shocks_or(ShockProcessSpec::scaling_default());
    let res = scaling_experiment_with(
        &config.model,
        &spec,
        &r.lambda_grid,
        r.t_window,
        r.windows_per_lambda,
        r.seed,
        &config.estimator.instruments(),
        &config.estimator.options(),
    )?;
    let mut points = String::from("window,seed,lambda_bar,kappa_inf_hat\n");
    for p in &res.points {
        points.push_str(&format!("{},{},{},{}\n", p.window, p.seed, p.lambda_bar, p.kappa_inf_hat));
    }
    let mut text = format_table(
        "log10 kappa_inf_hat = a + b log10 lambda_bar",
        &[
            ("a_hat", res.a_hat),
            ("a_se", res.a_se),
            ("a_hac_se", res.a_hac_se),
            ("b_hat", res.b_hat),
            ("b_se", res.b_se),
            ("b_hac_se", res.b_hac_se),
            ("r2", res.r2),
        ],
    );
    text.push_str(&format!("  windows = {}, failures = {}\n", res.n_windows, res.failures));
    Ok(Report {
        name: "scaling",
        json: to_json(&res)?,
        text,
        files: vec![("scaling_points.csv".to_string(), points.into_bytes())],
    })
}

pub fn meanfield(config: &ExperimentConfig) -> Outcome {
    config.validate()?;
    let mf = &config.meanfield;
    let seed = config.run.seed;
    let spec = config.shocks_or(ShockProcessSpec::default());
    let report = convergence_study(&config.model, &config.intensity, &spec, mf, seed)?;

    let cfg = MeanFieldConfig::algorithmic(&config.model, mf.sigma_p2)?;
    let shocks = simulate_shocks(&spec, mf.t_len, seed)?;
    let mut solver = FpSolver::new(cfg, &mf.grid)?;
    let mut path = String::from("period,mean,inflation\n");
    let mut prev = solver.grid.mean();
    for t in 0..mf.t_len {
        solver.advance_period(shocks.ygap[t], shocks.cinf[t])?;
        let m = solver.grid.mean();
        path.push_str(&format!("{},{},{}\n", t + 1, m, m - prev));
        prev = m;
    }
    let regression = if mf.t_len > 3 {
        Some(mean_field_regression(&MeanFieldConfig::from_params(&config.model, mf.sigma_p2)?, &shocks, &mf.grid)?)
    } else {
        None
    };

    let mut text = String::from("W1 distance, firm panel vs Fokker-Planck\n");
    for row in &report.rows {
        text.push_str(&format!(
            "  N = {:<8} median {}  mean {}  max {}\n",
            row.n_firms,
            fmt6(row.median_w1),
            fmt6(row.mean_w1),
            fmt6(row.max_w1)
        ));
    }
    text.push_str(&format!("  non-increasing median: {}\n", report.non_increasing));
    if let Some(r) = &regression {
        text.push_str(&format_table(
            "mean-field inflation on (ygap, cinf)",
            &[("coef_ygap", r.coef_ygap), ("coef_cinf", r.coef_cinf), ("ratio", r.ratio)],
        ));
    }
    Ok(Report {
        name: "meanfield",
        json: json!({ "convergence": to_json(&report)?, "regression": to_json(&regression)? }),
        text,
        files: vec![
            ("density.csv".to_string(), csv_bytes(|b| write_density(b, &solver.grid))?),
            ("meanfield_path.csv".to_string(), path.into_bytes()),
        ],
    })
}

pub fn welfare(config: &ExperimentConfig) -> Outcome {
    config.validate()?;
    let p = &config.model;
    let w = &config.welfare;
    let moments = w.moments();
    let base = closed_form_slopes(p)?;
    let alg = equilibrium_slopes(p)?;
    let welfare = welfare_decomposition(p, &moments, w.w_cl, w.w_ai)?;
    let policy = policy_report(p, &moments, w.expected_cinf_next)?;
    let lucas = lucas_welfare_cost(p, w.var_inf)?;
    let cutoff = match indexing_cutoff(p, &moments, w.eta_bar) {
        Ok(v) => Some(v),
        Err(IcpcError::Infeasible(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let mut rows = vec![
        ("kappa", base.kappa),
        ("kappa_inf", base.kappa_inf),
        ("phi_rho", p.algorithmic_intensity()),
        ("kappa_alg", alg.kappa),
        ("kappa_inf_alg", alg.kappa_inf),
        ("l_inf", welfare.l_inf),
        ("l_alg", welfare.l_alg),
        ("w_star", welfare.w_star),
        ("psi_inf_star", policy.psi_inf_star),
        ("pi_target", policy.pi_target),
        ("eta_inf_bound", policy.eta_inf_bound),
        ("lucas_cost", lucas),
    ];
    if let Some(c) = cutoff {
        rows.push(("indexing_cutoff", c));
    }
    let mut text = format_table("calibration", &rows);
    if cutoff.is_none() {
        text.push_str(&format!("  indexing cut-off: infeasible for eta_bar = {}\n", w.eta_bar));
    }
    let json = json!({
        "slopes": to_json(&base)?,
        "algorithmic_slopes": to_json(&alg)?,
        "phi_rho": p.algorithmic_intensity(),
        "welfare": to_json(&welfare)?,
        "policy": to_json(&policy)?,
        "lucas_cost": lucas,
        "indexing_cutoff": cutoff,
    });
    Ok(Report {
        name: "welfare",
        json,
        text,
        files: Vec::new(),
    })
}

pub fn montecarlo(config: &ExperimentConfig) -> Outcome {
    config.validate()?;
    let r = &config.run;
    let spec = config.shocks_or(ShockProcessSpec::estimation_default());
    let table = consistency_study_with(
        &config.model,
        &spec,
        &r.t_grid,
        r.reps,
        r.seed,
        &config.estimator.instruments(),
        &config.estimator.options(),
    )?;
    let mut csv = String::from(
        "t,reps,failures,mean_kappa,mean_kappa_inf,rmse_kappa,rmse_kappa_inf,coverage_kappa,coverage_kappa_inf,j_reject_rate\n",
    );
    let mut text = format!(
        "Monte Carlo, true kappa = {}, kappa_inf = {}\n  {:>7} {:>5} {:>12} {:>12} {:>9} {:>9} {:>9}\n",
        fmt6(table.true_kappa),
        fmt6(table.true_kappa_inf),
        "T",
        "fail",
        "rmse_k",
        "rmse_ki",
        "cov_k",
        "cov_ki",
        "J_rej"
    );
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.t,
            row.reps,
            row.failures,
            row.mean_kappa,
            row.mean_kappa_inf,
            row.rmse_kappa,
            row.rmse_kappa_inf,
            row.coverage_kappa,
            row.coverage_kappa_inf,
            row.j_reject_rate
        ));
        text.push_str(&format!(
            "  {:>7} {:>5} {:>12} {:>12} {:>9} {:>9} {:>9}\n",
            row.t,
            row.failures,
            fmt6(row.rmse_kappa),
            fmt6(row.rmse_kappa_inf),
            fmt6(row.coverage_kappa),
            fmt6(row.coverage_kappa_inf),
            fmt6(row.j_reject_rate)
        ));
    }
    if let (Some(a), Some(b)) = (table.rate_kappa, table.rate_kappa_inf) {
        text.push_str(&format!("  log-RMSE slope: kappa {}, kappa_inf {}\n", fmt6(a), fmt6(b)));
    }
    Ok(Report {
        name: "montecarlo",
        json: to_json(&table)?,
        text,
        files: vec![("montecarlo.csv".to_string(), csv.into_bytes())],
    })
}
