//! File formats and run plumbing: CSV datasets, TOML experiment configs,
//! run manifests and plain-text tables.
//!
//! CSV numbers are written with Rust's shortest round-trip formatting, so a
//! written-then-read dataset is bit-identical. Parsing never depends on the
//! process locale.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IcpcError, Result};
use crate::formulas::{ModelParams, ShockMoments};
use crate::gmm::{FirstStepWeight, GmmOptions, InstrumentSpec};
use crate::meanfield::{ConvergenceSpec, DensityGrid};
use crate::panel::{PanelDataset, PanelDgp, PanelRecord};
use crate::sim::{IntensityDistribution, ShockProcessSpec, TimeSeriesDataset};

pub const TIMESERIES_COLUMNS: [&str; 5] = ["period", "pi", "pi_e", "ygap", "cinf"];
pub const PANEL_COLUMNS: [&str; 5] = ["country", "period", "pi_core", "cinf", "ygap"];
pub const DENSITY_COLUMNS: [&str; 2] = ["cell_center", "density"];

struct Table {
    source: String,
    index: HashMap<String, usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, source: &str, required: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let index: HashMap<String, usize> = rdr
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for col in required {
            if !index.contains_key(*col) {
                return Err(IcpcError::MissingColumn {
                    path: source.to_string(),
                    column: col.to_string(),
                });
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Table {
            source: source.to_string(),
            index,
            rows,
        })
    }

    fn has(&self, col: &str) -> bool {
        self.index.contains_key(col)
    }

    fn text<'a>(&self, rec: &'a csv::StringRecord, col: &str) -> &'a str {
        rec.get(self.index[col]).unwrap_or("")
    }

    fn number(&self, line: usize, rec: &csv::StringRecord, col: &str) -> Result<f64> {
        let raw = self.text(rec, col);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(IcpcError::NonNumeric {
                path: self.source.clone(),
                row: line,
                column: col.to_string(),
                value: raw.to_string(),
            }),
        }
    }
}

fn period_order(labels: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    let numeric: Option<Vec<i64>> = labels.iter().map(|l| l.parse().ok()).collect();
    match numeric {
        Some(keys) => idx.sort_by_key(|&i| keys[i]),
        None => idx.sort_by(|&a, &b| labels[a].cmp(&labels[b])),
    }
    idx
}

/// Reads `period, pi, pi_e, ygap, cinf[, u]` and sorts rows by period.
pub fn read_timeseries<R: Read>(reader: R, source: &str) -> Result<TimeSeriesDataset> {
    let table = Table::read(reader, source, &TIMESERIES_COLUMNS)?;
    let with_u = table.has("u");
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut periods = Vec::with_capacity(table.rows.len());
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (line, rec) in &table.rows {
        let period = table.text(rec, "period").to_string();
        if seen.insert(period.clone(), *line).is_some() {
            return Err(IcpcError::DuplicatePeriod {
                path: source.to_string(),
                row: *line,
                period,
            });
        }
        periods.push(period);
        for (k, name) in ["pi", "pi_e", "ygap", "cinf"].iter().enumerate() {
            cols[k].push(table.number(*line, rec, name)?);
        }
        if with_u {
            cols[4].push(table.number(*line, rec, "u")?);
        }
    }
    let order = period_order(&periods);
    let pick = |v: &[f64]| -> Vec<f64> { order.iter().map(|&i| v[i]).collect() };
    let data = TimeSeriesDataset {
        periods: order.iter().map(|&i| periods[i].clone()).collect(),
        pi: pick(&cols[0]),
        pi_e: pick(&cols[1]),
        ygap: pick(&cols[2]),
        cinf: pick(&cols[3]),
        u: with_u.then(|| pick(&cols[4])),
    };
    data.validate()?;
    Ok(data)
}

pub fn load_timeseries_csv(path: &Path) -> Result<TimeSeriesDataset> {
    read_timeseries(fs::File::open(path)?, &path.display().to_string())
}

pub fn write_timeseries<W: Write>(writer: W, data: &TimeSeriesDataset) -> Result<()> {
    data.validate()?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = TIMESERIES_COLUMNS.to_vec();
    if data.u.is_some() {
        header.push("u");
    }
    w.write_record(&header)?;
    for t in 0..data.len() {
        let mut row = vec![
            data.periods[t].clone(),
            data.pi[t].to_string(),
            data.pi_e[t].to_string(),
            data.ygap[t].to_string(),
            data.cinf[t].to_string(),
        ];
        if let Some(u) = &data.u {
            row.push(u[t].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format panel; the `cinf` column holds the already lagged index.
pub fn read_panel<R: Read>(reader: R, source: &str) -> Result<PanelDataset> {
    let table = Table::read(reader, source, &PANEL_COLUMNS)?;
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut records = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let country = table.text(rec, "country").to_string();
        let period = table.text(rec, "period").to_string();
        if seen.insert((country.clone(), period.clone()), *line).is_some() {
            return Err(IcpcError::DuplicatePeriod {
                path: source.to_string(),
                row: *line,
                period: format!("{country}/{period}"),
            });
        }
        records.push(PanelRecord {
            pi_core: table.number(*line, rec, "pi_core")?,
            cinf_lag1: table.number(*line, rec, "cinf")?,
            ygap: table.number(*line, rec, "ygap")?,
            country,
            period,
        });
    }
    PanelDataset::from_records(&records)
}

pub fn load_panel_csv(path: &Path) -> Result<PanelDataset> {
    read_panel(fs::File::open(path)?, &path.display().to_string())
}

pub fn write_panel<W: Write>(writer: W, data: &PanelDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_COLUMNS)?;
    for r in data.to_records() {
        w.write_record([
            r.country,
            r.period,
            r.pi_core.to_string(),
            r.cinf_lag1.to_string(),
            r.ygap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density<W: Write>(writer: W, grid: &DensityGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DENSITY_COLUMNS)?;
    for (j, v) in grid.values.iter().enumerate() {
        w.write_record([grid.center(j).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a grid from equally spaced cell centers; `dt` is set to 1.
pub fn read_density<R: Read>(reader: R, source: &str) -> Result<DensityGrid> {
    let table = Table::read(reader, source, &DENSITY_COLUMNS)?;
    let mut centers = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        centers.push(table.number(*line, rec, "cell_center")?);
        values.push(table.number(*line, rec, "density")?);
    }
    let m = centers.len();
    if m < 16 {
        return Err(IcpcError::invalid("cells", format!("{m} < 16")));
    }
    let width = (centers[m - 1] - centers[0]) / (m - 1) as f64;
    DensityGrid::new(centers[0] - 0.5 * width, centers[m - 1] + 0.5 * width, values, 1.0)
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub pi_lags: usize,
    pub ygap_lags: usize,
    pub cinf_lags: usize,
    pub constant: bool,
    /// Newey-West bandwidth; automatic when absent.
    pub bandwidth: Option<usize>,
    pub first_step: FirstStepWeight,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let z = InstrumentSpec::default();
        EstimatorConfig {
            pi_lags: z.pi_lags,
            ygap_lags: z.ygap_lags,
            cinf_lags: z.cinf_lags,
            constant: z.constant,
            bandwidth: None,
            first_step: FirstStepWeight::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn instruments(&self) -> InstrumentSpec {
        InstrumentSpec {
            pi_lags: self.pi_lags,
            ygap_lags: self.ygap_lags,
            cinf_lags: self.cinf_lags,
            constant: self.constant,
        }
    }

    pub fn options(&self) -> GmmOptions {
        GmmOptions {
            bandwidth: self.bandwidth,
            first_step: self.first_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub t_len: usize,
    pub n_firms: usize,
    pub reps: usize,
    /// Sample sizes of the Monte Carlo study.
    pub t_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub windows_per_lambda: usize,
    pub t_window: usize,
    /// External coefficient and standard error for the panel Wald test.
    pub wald_coef: Option<f64>,
    pub wald_se: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            t_len: 2000,
            n_firms: 1000,
            reps: 200,
            t_grid: vec![500, 2000, 8000],
            lambda_grid: vec![0.06, 0.12, 0.18, 0.24, 0.30],
            windows_per_lambda: 10,
            t_window: 2000,
            wald_coef: None,
            wald_se: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareConfig {
    pub var_inf: f64,
    pub var_ygap: f64,
    pub var_u: f64,
    /// `E_t[c_inf_{t+1}]` for the inflation target.
    pub expected_cinf_next: f64,
    pub w_cl: f64,
    pub w_ai: f64,
    /// Target inference share for the indexing cut-off.
    pub eta_bar: f64,
}

impl Default for WelfareConfig {
    fn default() -> Self {
        WelfareConfig {
            var_inf: 1.0,
            var_ygap: 1.0,
            var_u: 1.0,
            expected_cinf_next: 1.0,
            w_cl: 0.0,
            w_ai: 0.0,
            eta_bar: 0.1,
        }
    }
}

impl WelfareConfig {
    pub fn moments(&self) -> ShockMoments {
        ShockMoments::new(self.var_inf, self.var_ygap, self.var_u)
    }
}

/// Everything a run needs besides the input data. Each block falls back to
/// its defaults when omitted; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    /// Shock processes; each command picks its own default when absent.
    pub shocks: Option<ShockProcessSpec>,
    pub intensity: IntensityDistribution,
    pub estimator: EstimatorConfig,
    pub run: RunConfig,
    pub panel: PanelDgp,
    pub meanfield: ConvergenceSpec,
    pub welfare: WelfareConfig,
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelParams::baseline(),
            shocks: None,
            intensity: IntensityDistribution::Uniform { low: 0.06, high: 0.30 },
            estimator: EstimatorConfig::default(),
            run: RunConfig::default(),
            panel: PanelDgp::default(),
            meanfield: ConvergenceSpec::default(),
            welfare: WelfareConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| IcpcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| IcpcError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IcpcError::Config(e.to_string()))
    }

    pub fn shocks_or(&self, fallback: ShockProcessSpec) -> ShockProcessSpec {
        self.shocks.unwrap_or(fallback)
    }

    /// Checks every block, so a bad config fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(s) = &self.shocks {
            s.validate()?;
        }
        self.intensity.validate()?;
        self.estimator.instruments().validate()?;
        self.panel.validate()?;
        self.welfare.moments().validate()?;
        let r = &self.run;
        if r.t_len < 2 {
            return Err(IcpcError::invalid("run.t_len", format!("{} < 2", r.t_len)));
        }
        if r.n_firms < 2 {
            return Err(IcpcError::invalid("run.n_firms", format!("{} < 2", r.n_firms)));
        }
        if r.reps == 0 {
            return Err(IcpcError::invalid("run.reps", "must be >= 1"));
        }
        if r.t_grid.is_empty() || r.t_grid.iter().any(|&t| t < 2) {
            return Err(IcpcError::invalid("run.t_grid", "needs sample sizes >= 2"));
        }
        if let Some(&bad) = r.lambda_grid.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(IcpcError::invalid("run.lambda_grid", format!("{bad} outside (0,1]")));
        }
        if r.windows_per_lambda == 0 || r.t_window < 2 {
            return Err(IcpcError::invalid("run.windows_per_lambda", "need >= 1 window of length >= 2"));
        }
        if let Some(se) = r.wald_se {
            if !(se.is_finite() && se > 0.0) {
                return Err(IcpcError::invalid("run.wald_se", format!("{se} must be > 0")));
            }
        }
        let mf = &self.meanfield;
        if mf.n_firms.is_empty() || mf.n_firms.iter().any(|&n| n < 2) || mf.reps == 0 {
            return Err(IcpcError::invalid("meanfield", "need N >= 2 firms and reps >= 1"));
        }
        if mf.t_len < 1 || mf.substeps == 0 || mf.grid.cells < 16 {
            return Err(IcpcError::invalid("meanfield", "need t_len >= 1, substeps >= 1, cells >= 16"));
        }
        if !(mf.sigma_p2.is_finite() && mf.sigma_p2 >= 0.0) {
            return Err(IcpcError::invalid("meanfield.sigma_p2", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.welfare.eta_bar) {
            return Err(IcpcError::invalid("welfare.eta_bar", "not in [0,1)"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (keys sorted), so the digest does
    /// not depend on key order in the source file.
    pub fn digest(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(command: &str, config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config.digest()?,
            seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            outputs: Vec::new(),
        })
    }

    pub fn finish(&mut self, outputs: Vec<String>) {
        self.outputs = outputs;
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }
}

/// Six-decimal fixed formatting used in human-readable tables.
pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Two-column `name  value` table with aligned names.
pub fn format_table(title: &str, rows: &[(&str, f64)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut out = format!("{title}\n");
    for (name, v) in rows {
        out.push_str(&format!("  {name:<width$}  {}\n", fmt6(*v)));
    }
    out
}
