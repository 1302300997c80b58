use std::path::Path;

use ridge_transfer::det_equiv::{asymptotic_boundary, isotropic_a, isotropic_asymptotic_boundary, solve_delta};
use ridge_transfer::finite_risk::{finite_boundary, isotropic_ridgeless_boundary, mc_expected_risk};
use ridge_transfer::source_opt::optimize_source;
use ridge_transfer::validation::{run_validation, Budget, ValidationReport, CRITERION_IDS};
use ridge_transfer::BoundaryVerdict;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GridPoint};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Everything a command hands back for rendering and storage.
#[derive(Debug)]
pub struct Outcome {
    pub table: Table,
    pub inputs: Value,
    pub diagnostics: Vec<String>,
    /// Output is complete but some rows failed; exit with status 1.
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BoundaryKind {
    Finite,
    FiniteIsotropic,
    Asymptotic,
    AsymptoticIsotropic,
}

impl BoundaryKind {
    fn label(self) -> &'static str {
        match self {
            BoundaryKind::Finite => "finite",
            BoundaryKind::FiniteIsotropic => "finite-isotropic",
            BoundaryKind::Asymptotic => "asymptotic",
            BoundaryKind::AsymptoticIsotropic => "asymptotic-isotropic",
        }
    }
}

fn grid_columns(cfg: &ExperimentConfig, rest: &[&str]) -> Vec<String> {
    let mut cols = vec!["grid_value".to_string()];
    if cfg.axis_count() == 2 {
        cols.push("grid_value_2".to_string());
    }
    cols.extend(rest.iter().map(|s| s.to_string()));
    cols
}

fn grid_cells(cfg: &ExperimentConfig, pt: &GridPoint) -> Vec<Cell> {
    match cfg.axis_count() {
        0 => vec![Cell::Empty],
        _ => pt.values.iter().map(|&v| Cell::Num(v)).collect(),
    }
}

fn config_inputs(cfg: &ExperimentConfig, seed: u64, extra: Value) -> Value {
    json!({
        "config": cfg,
        "seed": seed,
        "extra": extra,
    })
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut table = Table::new(grid_columns(
        cfg,
        &[
            "scratch_risk",
            "transfer_risk",
            "delta",
            "stderr",
            "B",
            "V0_term",
            "V1_term",
            "lambda0",
            "lambda1",
        ],
    ));
    for pt in cfg.grid()? {
        let s = &pt.scenario;
        let tp = s.task_pair()?;
        let r = mc_expected_risk(&tp, s.lambda0(), s.lambda1(), cfg.mc.replicates, seed)?;
        let mut row = grid_cells(cfg, &pt);
        row.extend([
            r.scratch_risk,
            r.transfer_risk,
            r.delta,
            r.mc_stderr,
            r.transfer_bias,
            r.transfer_var_source,
            r.transfer_var_target,
            s.lambda0(),
            s.lambda1(),
        ]
        .map(Cell::from));
        table.push(row);
    }
    Ok(Outcome {
        table,
        inputs: config_inputs(cfg, seed, Value::Null),
        diagnostics: vec![],
        failed: false,
    })
}

pub fn boundary(cfg: &ExperimentConfig, seed: u64, kind: BoundaryKind) -> Result<Outcome, CliError> {
    let mut table = Table::new(grid_columns(cfg, &["lhs", "rhs", "beneficial"]));
    let mut diagnostics = Vec::new();
    for pt in cfg.grid()? {
        let s = &pt.scenario;
        let isotropic_only = matches!(kind, BoundaryKind::FiniteIsotropic | BoundaryKind::AsymptoticIsotropic);
        if isotropic_only && !s.is_isotropic() {
            return Err(CliError::Invalid(format!(
                "criterion {} needs identity covariances; remove task.spectrum0/spectrum1",
                kind.label()
            )));
        }
        let verdict: BoundaryVerdict = match kind {
            BoundaryKind::Finite => {
                let tp = s.task_pair()?;
                finite_boundary(&tp, s.lambda0(), s.lambda1(), cfg.mc.replicates, seed)?
            }
            BoundaryKind::FiniteIsotropic => {
                if s.tau0 != 0.0 || s.tau1 != 0.0 {
                    return Err(CliError::Invalid(
                        "criterion finite-isotropic is the ridgeless closed form; set both penalties to 0".into(),
                    ));
                }
                s.task_pair()?;
                isotropic_ridgeless_boundary(s.w0_norm_sq, s.rho, s.sigma0, s.n0, s.p)?
            }
            BoundaryKind::Asymptotic => {
                let tp = s.task_pair()?;
                asymptotic_boundary(&tp, s.tau0, s.tau1)?
            }
            BoundaryKind::AsymptoticIsotropic => {
                s.task_pair()?;
                isotropic_asymptotic_boundary(s.w0_norm_sq, s.rho, s.sigma0, s.gamma0(), s.tau0)?
            }
        };
        if !(verdict.lhs.is_finite() && verdict.rhs.is_finite()) {
            diagnostics.push(format!("non-finite boundary sides at grid point {:?}", pt.values));
        }
        let mut row = grid_cells(cfg, &pt);
        row.extend([
            Cell::from(verdict.lhs),
            Cell::from(verdict.rhs),
            Cell::from(verdict.transfer_beneficial),
        ]);
        table.push(row);
    }
    Ok(Outcome {
        table,
        inputs: config_inputs(cfg, seed, json!({"criterion": kind.label()})),
        failed: !diagnostics.is_empty(),
        diagnostics,
    })
}

pub fn optimize(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut table = Table::new(grid_columns(
        cfg,
        &["a0_star", "tau0_star", "tau0_source_opt", "sigma0_star", "regime"],
    ));
    let mut diagnostics = Vec::new();
    for pt in cfg.grid()? {
        let s = &pt.scenario;
        if !s.is_isotropic() {
            return Err(CliError::Invalid(
                "optimize-source needs identity covariances; remove task.spectrum0/spectrum1".into(),
            ));
        }
        let r = optimize_source(s.gamma0(), s.w0_norm_sq, s.rho, s.sigma0)?;
        if r.clamped {
            diagnostics.push(format!(
                "a0_star clamped to 1/sqrt(gamma0) at grid point {:?} (rho exceeds |w0|^2)",
                pt.values
            ));
        }
        let mut row = grid_cells(cfg, &pt);
        row.extend([
            Cell::from(r.a0_star),
            Cell::from(r.tau0_star),
            Cell::from(r.tau0_source_opt),
            Cell::from(r.sigma0_star),
            Cell::from(format!("{:?}", r.regime).as_str()),
        ]);
        table.push(row);
    }
    Ok(Outcome {
        table,
        inputs: config_inputs(cfg, seed, Value::Null),
        diagnostics,
        failed: false,
    })
}

/// Reads whitespace- or comma-separated eigenvalues; `#` starts a comment.
pub fn read_spectrum(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read spectrum file {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| {
                CliError::Invalid(format!("{}:{}: not a number: {tok:?}", path.display(), lineno + 1))
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Invalid(format!(
                    "{}:{}: eigenvalues must be finite and >= 0, got {v}",
                    path.display(),
                    lineno + 1
                )));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(CliError::Invalid(format!("{}: no eigenvalues found", path.display())));
    }
    Ok(values)
}

pub fn fixed_point(spectrum: Option<Vec<f64>>, gamma: f64, taus: &[f64]) -> Result<Outcome, CliError> {
    if taus.is_empty() {
        return Err(CliError::Invalid("--tau needs at least one value".into()));
    }
    let isotropic = spectrum.is_none();
    let spectrum = spectrum.unwrap_or_else(|| vec![1.0]);
    let mut cols = vec!["tau", "delta", "residual", "iterations", "converged"];
    if isotropic {
        cols.extend(["a0", "abs_delta_minus_gamma_a0"]);
    }
    let mut table = Table::new(cols);
    let mut diagnostics = Vec::new();
    for &tau in taus {
        let mut row = vec![Cell::from(tau)];
        let delta = match solve_delta(&spectrum, gamma, tau) {
            Ok(fp) => {
                row.extend([
                    Cell::from(fp.delta),
                    Cell::from(fp.residual),
                    Cell::from(fp.iterations),
                    Cell::from(fp.converged),
                ]);
                Some(fp.delta)
            }
            Err(ridge_transfer::Error::NoConvergence { iterations, residual }) => {
                diagnostics.push(format!("tau = {tau}: no convergence after {iterations} iterations"));
                row.extend([
                    Cell::Empty,
                    Cell::from(residual),
                    Cell::from(iterations),
                    Cell::from(false),
                ]);
                None
            }
            Err(e) => return Err(e.into()),
        };
        if isotropic {
            let a0 = isotropic_a(tau, gamma);
            row.push(Cell::from(a0));
            row.push(Cell::from(delta.map(|d| (d - gamma * a0).abs())));
        }
        table.push(row);
    }
    Ok(Outcome {
        table,
        inputs: json!({
            "spectrum": if isotropic { Value::Null } else { json!(spectrum) },
            "gamma": gamma,
            "tau": taus,
        }),
        failed: !diagnostics.is_empty(),
        diagnostics,
    })
}

pub fn validate(
    budget: &Budget,
    seed: u64,
    criteria: &[u8],
    overrides: &[(u8, f64)],
) -> Result<(ValidationReport, Value), CliError> {
    let ids: Vec<u8> = if criteria.is_empty() {
        CRITERION_IDS.to_vec()
    } else {
        criteria.to_vec()
    };
    let mut report = run_validation(budget, seed, &ids)?;
    report.apply_overrides(overrides);
    let inputs = json!({
        "budget": budget,
        "seed": seed,
        "criteria": ids,
        "tolerance_overrides": overrides,
    });
    Ok((report, inputs))
}
