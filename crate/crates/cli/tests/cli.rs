use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn icpc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icpc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_RUN: &str = "[run]\nreps = 3\nt_grid = [200, 400]\nlambda_grid = [0.1, 0.3]\nwindows_per_lambda = 2\nt_window = 300\n\n[meanfield]\nn_firms = [50, 200]\nt_len = 4\nreps = 1\nsubsteps = 5\n\n[meanfield.grid]\ncells = 64\n";

#[test]
fn no_arguments_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = icpc(&[], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert!(stderr(&o).contains("error[usage]"));
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(icpc(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(icpc(&["welfare", "--bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn welfare_prints_calibrated_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = icpc(&["welfare", "--out", "w"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for (name, value) in [("kappa", "0.084333"), ("kappa_inf", "0.015180"), ("psi_inf_star", "0.016152")] {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap_or_else(|| panic!("no {name} row in\n{text}"));
        assert!(line.ends_with(value), "{line}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("w/welfare.json")).unwrap()).unwrap();
    assert_eq!(json["phi_rho"].as_f64().unwrap(), 0.064);
    assert!(dir.path().join("w/manifest.json").exists());
}

#[test]
fn estimate_on_simulated_file_emits_json_keys() {
    let dir = tempfile::tempdir().unwrap();
    let sim = icpc(&["simulate", "--t-len", "400", "--seed", "5", "--out", "sim"], dir.path());
    assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
    let est = icpc(&["estimate", "--data", "sim/timeseries.csv", "--out", "est", "--json"], dir.path());
    assert_eq!(est.status.code(), Some(0), "{}", stderr(&est));
    let json: serde_json::Value = serde_json::from_str(&stdout(&est)).unwrap();
    for key in ["kappa_hat", "kappa_inf_hat", "hac_se", "j_stat"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let on_disk = fs::read_to_string(dir.path().join("est/estimate.json")).unwrap();
    assert_eq!(on_disk, stdout(&est));
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = icpc(&["estimate", "--data", "absent.csv", "--out", "e"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[validation]: cannot read absent.csv"));
    assert!(!dir.path().join("e").exists());
}

#[test]
fn bad_csv_reports_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "period,pi,pi_e,ygap,cinf\n1,0,0,0,0\n2,0,0,zz,0\n").unwrap();
    let o = icpc(&["estimate", "--data", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("row 3") && err.contains("ygap"), "{err}");
}

#[test]
fn short_sample_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(icpc(&["simulate", "--t-len", "10", "--out", "s"], dir.path()).status.code(), Some(0));
    let o = icpc(&["estimate", "--data", "s/timeseries.csv", "--out", "e"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[runtime]:"));
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[run]\nreps = 0\n").unwrap();
    fs::write(dir.path().join("typo.toml"), "[modle]\ntheta = 0.5\n").unwrap();
    for cfg in ["bad.toml", "typo.toml"] {
        for cmd in ["simulate", "welfare", "montecarlo", "panel"] {
            let o = icpc(&[cmd, "--config", cfg, "--out", "o"], dir.path());
            assert_eq!(o.status.code(), Some(1), "{cmd} {cfg}");
            assert!(stderr(&o).starts_with("error[validation]:"));
            assert!(!dir.path().join("o").exists());
        }
    }
}

#[test]
fn every_subcommand_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL_RUN).unwrap();
    let runs: [&[&str]; 7] = [
        &["simulate", "--kind", "firms", "--t-len", "50", "--n-firms", "100"],
        &["simulate", "--kind", "panel"],
        &["panel"],
        &["scaling"],
        &["meanfield"],
        &["welfare"],
        &["montecarlo"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = format!("run{k}_{rep}");
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--config", "small.toml", "--seed", "11", "--out", &out]);
            let o = icpc(&full, dir.path());
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
            let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join(&out))
                .unwrap()
                .map(|e| e.unwrap())
                .filter(|e| e.file_name() != "manifest.json")
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
                .collect();
            files.sort();
            assert!(!files.is_empty());
            outputs.push((files, stdout(&o)));
        }
        assert_eq!(outputs[0], outputs[1], "{args:?} is not reproducible");
    }
}

#[test]
fn manifest_records_seed_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = icpc(&["simulate", "--seed", "99", "--t-len", "30", "--out", "m"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["timeseries.csv", "simulate.json"]);
}
