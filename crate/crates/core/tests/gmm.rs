use icpc_core::formulas::{equilibrium_slopes, ModelParams};
use icpc_core::gmm::*;
use icpc_core::sim::{simulate_aggregate, ShockProcessSpec, TimeSeriesDataset};

fn sample(t: usize, seed: u64) -> TimeSeriesDataset {
    simulate_aggregate(&ModelParams::baseline(), &ShockProcessSpec::estimation_default(), t, seed).unwrap()
}

fn scaled(d: &TimeSeriesDataset, c: f64) -> TimeSeriesDataset {
    let s = |v: &Vec<f64>| v.iter().map(|x| c * x).collect::<Vec<_>>();
    TimeSeriesDataset {
        periods: d.periods.clone(),
        pi: s(&d.pi),
        pi_e: s(&d.pi_e),
        ygap: s(&d.ygap),
        cinf: s(&d.cinf),
        u: d.u.as_ref().map(s),
    }
}

#[test]
fn estimates_invariant_to_rescaling_all_series() {
    let d = sample(800, 3);
    let spec = InstrumentSpec::default();
    let a = two_step_gmm(&d, &spec, 0.996).unwrap();
    let b = two_step_gmm(&scaled(&d, 37.0), &spec, 0.996).unwrap();
    assert!((a.kappa_hat - b.kappa_hat).abs() < 1e-9);
    assert!((a.kappa_inf_hat - b.kappa_inf_hat).abs() < 1e-9);
    assert!((a.j_stat - b.j_stat).abs() < 1e-7 * a.j_stat.max(1.0));
    assert!((a.hac_se[0] - b.hac_se[0]).abs() < 1e-9 * a.hac_se[0]);
}

#[test]
fn explicit_bandwidth_is_used() {
    let d = sample(600, 4);
    let opts = GmmOptions {
        bandwidth: Some(7),
        ..GmmOptions::default()
    };
    let fit = two_step_gmm_with(&d, &InstrumentSpec::default(), 0.996, &opts).unwrap();
    assert_eq!(fit.bandwidth, 7);
    assert_eq!(fit.j_df, InstrumentSpec::default().count() - 2);
}

#[test]
fn same_seed_same_estimates() {
    let a = two_step_gmm(&sample(500, 11), &InstrumentSpec::default(), 0.996).unwrap();
    let b = two_step_gmm(&sample(500, 11), &InstrumentSpec::default(), 0.996).unwrap();
    assert_eq!(a, b);
}

#[test]
fn covariance_is_positive_definite() {
    for seed in 0..20 {
        let fit = two_step_gmm(&sample(400, seed), &InstrumentSpec::default(), 0.996).unwrap();
        let v = fit.vcov;
        assert!(v[0][0] > 0.0 && v[1][1] > 0.0);
        assert!(v[0][0] * v[1][1] - v[0][1] * v[1][0] > 0.0);
        assert!((v[0][1] - v[1][0]).abs() <= 1e-12 * v[0][0].max(v[1][1]));
    }
}

#[test]
fn j_test_size_near_nominal() {
    let p = ModelParams::baseline();
    let table = consistency_study(&p, &ShockProcessSpec::estimation_default(), &[2000], 500, 7_000).unwrap();
    let row = &table.rows[0];
    assert_eq!(row.failures, 0);
    assert!((0.025..=0.085).contains(&row.j_reject_rate), "J rejection {}", row.j_reject_rate);
}

#[test]
fn consistency_table_reports_truth() {
    let p = ModelParams::baseline();
    let truth = equilibrium_slopes(&p).unwrap();
    let table = consistency_study(&p, &ShockProcessSpec::estimation_default(), &[300, 600], 4, 1).unwrap();
    assert_eq!(table.true_kappa, truth.kappa);
    assert_eq!(table.true_kappa_inf, truth.kappa_inf);
    assert_eq!(table.rows.len(), 2);
    assert!(table.rate_kappa.is_some());
}
