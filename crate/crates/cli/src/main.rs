mod commands;
mod config;
mod error;
mod output;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ridge_transfer::validation::{Budget, Preset, ValidationReport};
use serde_json::Value;

use crate::commands::{BoundaryKind, Outcome};
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ridge-transfer", version, about = "Risk, phase boundaries and source tuning for L2-SP ridge transfer")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output tables and run records.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `mc.seed` (and the validation seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Quick,
    Full,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo scratch and transfer risks over the config's sweep.
    Simulate,
    /// Transfer-benefit inequality sides over the sweep.
    Boundary {
        #[arg(long, value_enum)]
        criterion: BoundaryKind,
    },
    /// Transfer-optimal source penalty over the sweep (isotropic tasks).
    OptimizeSource,
    /// Solve the resolvent fixed point on a grid of penalties.
    FixedPoint {
        /// Dimension-to-sample ratio p / n.
        #[arg(long)]
        gamma: f64,
        /// Comma-separated penalties.
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        /// Eigenvalues of the covariance, whitespace or comma separated.
        #[arg(long, conflicts_with = "isotropic")]
        spectrum_file: Option<PathBuf>,
        /// Identity covariance; adds the closed-form columns.
        #[arg(long)]
        isotropic: bool,
    },
    /// Run the validation criteria.
    Validate {
        #[arg(value_enum, default_value_t = PresetArg::Quick)]
        preset: PresetArg,
        /// Replicates for every Monte Carlo criterion.
        #[arg(long)]
        replicates: Option<usize>,
        /// Noise draws for the decomposition check.
        #[arg(long)]
        noise_draws: Option<usize>,
        /// Subset of criterion ids, comma-separated.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        /// Replace a criterion's headline bound, as `ID=VALUE`.
        #[arg(long = "tolerance", value_parser = parse_override)]
        tolerances: Vec<(u8, f64)>,
    },
}

fn parse_override(s: &str) -> Result<(u8, f64), String> {
    let (id, value) = s.split_once('=').ok_or("expected ID=VALUE")?;
    let id: u8 = id.trim().parse().map_err(|_| format!("bad criterion id {id:?}"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("bad bound {value:?}"))?;
    Ok((id, value))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Invalid("this command needs --config PATH".into()))?;
    ExperimentConfig::load(path)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let (name, outcome) = match &cli.command {
        Command::Simulate => {
            let cfg = load_config(&cli)?;
            ("simulate", commands::simulate(&cfg, cli.seed.unwrap_or(cfg.mc.seed))?)
        }
        Command::Boundary { criterion } => {
            let cfg = load_config(&cli)?;
            ("boundary", commands::boundary(&cfg, cli.seed.unwrap_or(cfg.mc.seed), *criterion)?)
        }
        Command::OptimizeSource => {
            let cfg = load_config(&cli)?;
            ("optimize-source", commands::optimize(&cfg, cli.seed.unwrap_or(cfg.mc.seed))?)
        }
        Command::FixedPoint {
            gamma,
            tau,
            spectrum_file,
            isotropic,
        } => {
            let spectrum = match (spectrum_file, isotropic) {
                (Some(path), _) => Some(commands::read_spectrum(path)?),
                (None, true) => None,
                (None, false) => {
                    return Err(CliError::Invalid("fixed-point needs --spectrum-file or --isotropic".into()))
                }
            };
            ("fixed-point", commands::fixed_point(spectrum, *gamma, tau)?)
        }
        Command::Validate {
            preset,
            replicates,
            noise_draws,
            criteria,
            tolerances,
        } => {
            let preset = match preset {
                PresetArg::Quick => Preset::Quick,
                PresetArg::Full => Preset::Full,
            };
            let mut budget = Budget::for_preset(preset);
            if let Some(r) = replicates {
                budget = budget.with_replicates(*r);
            }
            if let Some(n) = noise_draws {
                budget.noise_draws = *n;
            }
            let seed = cli.seed.unwrap_or(20240601);
            let (report, inputs) = commands::validate(&budget, seed, criteria, tolerances)?;
            return emit_validation(&cli, &report, &inputs);
        }
    };
    emit(&cli, name, &outcome)?;
    Ok(if outcome.failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn write_file(dir: &Path, file: &str, body: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn emit(cli: &Cli, name: &str, outcome: &Outcome) -> Result<(), CliError> {
    let (body, ext) = match cli.format {
        Format::Csv => (outcome.table.to_csv(), "csv"),
        Format::Json => (outcome.table.to_json(), "json"),
    };
    for d in &outcome.diagnostics {
        eprintln!("warning: {d}");
    }
    match &cli.out {
        None => print!("{body}"),
        Some(dir) => {
            let path = write_file(dir, &format!("{name}.{ext}"), &body)?;
            let id = store::run_id(name, &outcome.inputs);
            let record = store::RunRecord {
                run_id: &id,
                timestamp_unix: store::now_unix(),
                code_version: store::CODE_VERSION,
                command: name,
                inputs: &outcome.inputs,
                rows: outcome.table.to_json_rows(),
                diagnostics: &outcome.diagnostics,
            };
            store::append(dir, &record)?;
            eprintln!("wrote {} (run {id})", path.display());
        }
    }
    Ok(())
}

fn emit_validation(cli: &Cli, report: &ValidationReport, inputs: &Value) -> Result<ExitCode, CliError> {
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    if cli.out.is_none() && cli.format == Format::Json {
        println!("{json}");
    } else {
        for o in &report.outcomes {
            println!("{}", o.summary_line());
        }
        let passed = report.outcomes.iter().filter(|o| o.pass).count();
        println!("{passed}/{} criteria passed", report.outcomes.len());
    }
    if let Some(dir) = &cli.out {
        write_file(dir, "validate.csv", &report.to_csv())?;
        write_file(dir, "validate.json", &format!("{json}\n"))?;
        let id = store::run_id("validate", inputs);
        let rows = report
            .outcomes
            .iter()
            .map(|o| serde_json::to_value(o).expect("outcome serializes"))
            .collect();
        let diagnostics: Vec<String> = report
            .outcomes
            .iter()
            .filter(|o| !o.pass)
            .map(|o| format!("criterion {} failed", o.id))
            .collect();
        store::append(
            dir,
            &store::RunRecord {
                run_id: &id,
                timestamp_unix: store::now_unix(),
                code_version: store::CODE_VERSION,
                command: "validate",
                inputs,
                rows,
                diagnostics: &diagnostics,
            },
        )?;
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
