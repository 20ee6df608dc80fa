//! `icpc`: batch front end for simulation, estimation and policy reports.
//!
//! Exit codes: 0 success, 1 invalid input (usage, config, data), 2 runtime
//! or numerical failure. Errors go to stderr as `error[<kind>]: <message>`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use icpc_core::io::{write_file_atomic, ExperimentConfig, RunManifest};
use icpc_core::IcpcError;

#[derive(Parser, Debug)]
#[command(name = "icpc", version, about = "Inference-cost Phillips curve toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Base seed; overrides `run.seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `output_dir` from the config, else `icpc-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report on stdout instead of the text table.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimKind::Aggregate)]
        kind: SimKind,
        /// Sample length; overrides `run.t_len` (or `panel.t_len`).
        #[arg(long)]
        t_len: Option<usize>,
        /// Number of firms for `--kind firms`; overrides `run.n_firms`.
        #[arg(long)]
        n_firms: Option<usize>,
    },
    /// Two-step GMM on a time-series CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Fixed-effects panel regression with Driscoll-Kraay errors.
    Panel {
        /// Long-format panel CSV; a synthetic panel is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Log-log regression of estimated pass-through on AI intensity.
    Scaling,
    /// Fokker-Planck density and the firm-panel convergence study.
    Meanfield,
    /// Closed-form slopes, welfare decomposition and policy quantities.
    Welfare,
    /// Monte Carlo RMSE, coverage and J-test size of the GMM estimator.
    Montecarlo,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimKind {
    Aggregate,
    Firms,
    Panel,
}

pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<IcpcError> for Failure {
    fn from(e: IcpcError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

/// What a command produced, before anything touches the filesystem.
pub struct Report {
    pub name: &'static str,
    pub json: serde_json::Value,
    pub text: String,
    pub files: Vec<(String, Vec<u8>)>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    eprintln!("error[usage]: invalid command line");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error[validation]: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error[runtime]: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.run.seed = seed;
    }
    let out_dir = cli
        .common
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("icpc-out"));
    let mut manifest = RunManifest::start(command_name(&cli.command), &config, config.run.seed)?;

    let report = match cli.command {
        Command::Simulate { kind, t_len, n_firms } => commands::simulate(&mut config, kind, t_len, n_firms)?,
        Command::Estimate { data } => commands::estimate(&config, &data)?,
        Command::Panel { data } => commands::panel(&config, data.as_deref())?,
        Command::Scaling => commands::scaling(&config)?,
        Command::Meanfield => commands::meanfield(&config)?,
        Command::Welfare => commands::welfare(&config)?,
        Command::Montecarlo => commands::montecarlo(&config)?,
    };

    let io_err = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", out_dir.display()));
    std::fs::create_dir_all(&out_dir).map_err(io_err)?;
    let json_name = format!("{}.json", report.name);
    let mut json_text = serde_json::to_string_pretty(&report.json).map_err(|e| Failure::Runtime(e.to_string()))?;
    json_text.push('\n');
    let mut written = Vec::new();
    for (name, bytes) in report
        .files
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .chain(std::iter::once((json_name.as_str(), json_text.as_bytes())))
    {
        write_file_atomic(&out_dir.join(name), bytes)?;
        written.push(name.to_string());
    }
    manifest.finish(written);
    let manifest_text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file_atomic(&out_dir.join("manifest.json"), manifest_text.as_bytes())?;

    if cli.common.json {
        print!("{json_text}");
    } else {
        print!("{}", report.text);
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Estimate { .. } => "estimate",
        Command::Panel { .. } => "panel",
        Command::Scaling => "scaling",
        Command::Meanfield => "meanfield",
        Command::Welfare => "welfare",
        Command::Montecarlo => "montecarlo",
    }
}
