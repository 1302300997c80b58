//! Experiment configuration files.
//!
//! ```toml
//! schema_version = "1"
//!
//! [task]
//! p = 100
//! n0 = 49
//! n1 = 25
//! w0_norm_sq = 1.0
//! rho = 0.9
//! w1_norm_sq = 1.5
//! sigma0 = 0.7
//! sigma1 = 0.5
//! # spectrum0 = [...]   optional diagonal covariances, length p
//! # spectrum1 = [...]
//!
//! [penalties]
//! tau0 = 0.5            # or lambda0 / lambda1, never both
//! tau1 = 0.5
//!
//! [mc]
//! replicates = 2000
//! seed = 7
//!
//! [sweep]
//! axis = "sigma0"
//! values = [0.1, 0.5, 1.0]
//!
//! # [sweep2]           optional second axis for phase diagrams
//! ```

use std::path::Path;

use ridge_transfer::task::signal_pair;
use ridge_transfer::{Covariance, TaskPair};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    pub task: TaskSection,
    pub penalties: PenaltySection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep2: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub p: usize,
    pub n0: usize,
    pub n1: usize,
    pub w0_norm_sq: f64,
    pub rho: f64,
    pub w1_norm_sq: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum1: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rho,
    Sigma0,
    Tau0,
    Gamma0,
    N1,
    Sigma1,
    Tau1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// One fully specified problem instance with penalties in `τ` form.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub p: usize,
    pub n0: usize,
    pub n1: usize,
    pub w0_norm_sq: f64,
    pub rho: f64,
    pub w1_norm_sq: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub spectrum0: Option<Vec<f64>>,
    pub spectrum1: Option<Vec<f64>>,
    pub tau0: f64,
    pub tau1: f64,
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{field}: {reason}"))
}

fn finite_nonneg(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Invalid(msg) => CliError::Invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Invalid(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {:?}, expected {SCHEMA_VERSION:?}", self.schema_version),
            ));
        }
        let t = &self.task;
        if t.p == 0 {
            return Err(invalid("task.p", "must be > 0"));
        }
        for (field, n) in [("task.n0", t.n0), ("task.n1", t.n1)] {
            if n == 0 {
                return Err(invalid(field, "must be > 0"));
            }
        }
        for (field, v) in [
            ("task.w0_norm_sq", t.w0_norm_sq),
            ("task.w1_norm_sq", t.w1_norm_sq),
            ("task.sigma0", t.sigma0),
            ("task.sigma1", t.sigma1),
        ] {
            finite_nonneg(field, v)?;
        }
        if !t.rho.is_finite() {
            return Err(invalid("task.rho", "must be finite"));
        }
        for (field, s) in [("task.spectrum0", &t.spectrum0), ("task.spectrum1", &t.spectrum1)] {
            if let Some(s) = s {
                if s.len() != t.p {
                    return Err(invalid(field, format!("has {} entries, expected p = {}", s.len(), t.p)));
                }
                if let Some(bad) = s.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(invalid(field, format!("entries must be finite and >= 0, found {bad}")));
                }
            }
        }

        let pen = &self.penalties;
        let has_tau = pen.tau0.is_some() || pen.tau1.is_some();
        let has_lambda = pen.lambda0.is_some() || pen.lambda1.is_some();
        if has_tau && has_lambda {
            return Err(invalid("penalties", "use either tau0/tau1 or lambda0/lambda1, not both"));
        }
        if has_tau && (pen.tau0.is_none() || pen.tau1.is_none()) {
            return Err(invalid("penalties", "both tau0 and tau1 are required"));
        }
        if has_lambda && (pen.lambda0.is_none() || pen.lambda1.is_none()) {
            return Err(invalid("penalties", "both lambda0 and lambda1 are required"));
        }
        if !has_tau && !has_lambda {
            return Err(invalid("penalties", "set tau0/tau1 or lambda0/lambda1"));
        }
        for (field, v) in [
            ("penalties.tau0", pen.tau0),
            ("penalties.tau1", pen.tau1),
            ("penalties.lambda0", pen.lambda0),
            ("penalties.lambda1", pen.lambda1),
        ] {
            if let Some(v) = v {
                finite_nonneg(field, v)?;
            }
        }

        if self.mc.replicates < 2 {
            return Err(invalid("mc.replicates", format!("must be >= 2, got {}", self.mc.replicates)));
        }
        for (field, sweep) in [("sweep", &self.sweep), ("sweep2", &self.sweep2)] {
            if let Some(s) = sweep {
                if s.values.is_empty() {
                    return Err(invalid(&format!("{field}.values"), "must be nonempty"));
                }
                if let Some(bad) = s.values.iter().find(|v| !v.is_finite()) {
                    return Err(invalid(&format!("{field}.values"), format!("must be finite, found {bad}")));
                }
            }
        }
        if self.sweep2.is_some() && self.sweep.is_none() {
            return Err(invalid("sweep2", "needs a [sweep] section"));
        }
        if let (Some(a), Some(b)) = (&self.sweep, &self.sweep2) {
            if a.axis == b.axis {
                return Err(invalid("sweep2.axis", "must differ from sweep.axis"));
            }
        }
        Ok(())
    }

    /// Base instance with penalties converted to `τ = λ / n`.
    pub fn base_scenario(&self) -> Scenario {
        let t = &self.task;
        let pen = &self.penalties;
        let (tau0, tau1) = match (pen.tau0, pen.tau1) {
            (Some(a), Some(b)) => (a, b),
            _ => (
                pen.lambda0.unwrap_or(0.0) / t.n0 as f64,
                pen.lambda1.unwrap_or(0.0) / t.n1 as f64,
            ),
        };
        Scenario {
            p: t.p,
            n0: t.n0,
            n1: t.n1,
            w0_norm_sq: t.w0_norm_sq,
            rho: t.rho,
            w1_norm_sq: t.w1_norm_sq,
            sigma0: t.sigma0,
            sigma1: t.sigma1,
            spectrum0: t.spectrum0.clone(),
            spectrum1: t.spectrum1.clone(),
            tau0,
            tau1,
        }
    }

    /// Grid points as `(first axis value, second axis value, scenario)`,
    /// second axis varying fastest.
    pub fn grid(&self) -> Result<Vec<GridPoint>, CliError> {
        let base = self.base_scenario();
        let Some(first) = &self.sweep else {
            return Ok(vec![GridPoint {
                values: vec![],
                scenario: base,
            }]);
        };
        let mut out = Vec::new();
        for &v in &first.values {
            let s1 = base.with_axis(first.axis, v)?;
            match &self.sweep2 {
                None => out.push(GridPoint {
                    values: vec![v],
                    scenario: s1,
                }),
                Some(second) => {
                    for &u in &second.values {
                        out.push(GridPoint {
                            values: vec![v, u],
                            scenario: s1.with_axis(second.axis, u)?,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn axis_count(&self) -> usize {
        self.sweep.iter().count() + self.sweep2.iter().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub values: Vec<f64>,
    pub scenario: Scenario,
}

fn as_count(field: &str, v: f64) -> Result<usize, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(invalid(field, format!("must be a positive integer, got {v}")))
    }
}

impl Scenario {
    pub fn with_axis(&self, axis: Axis, v: f64) -> Result<Self, CliError> {
        let mut s = self.clone();
        match axis {
            Axis::Rho => s.rho = v,
            Axis::Sigma0 => {
                finite_nonneg("sweep sigma0", v)?;
                s.sigma0 = v;
            }
            Axis::Sigma1 => {
                finite_nonneg("sweep sigma1", v)?;
                s.sigma1 = v;
            }
            Axis::Tau0 => {
                finite_nonneg("sweep tau0", v)?;
                s.tau0 = v;
            }
            Axis::Tau1 => {
                finite_nonneg("sweep tau1", v)?;
                s.tau1 = v;
            }
            Axis::N1 => s.n1 = as_count("sweep n1", v)?,
            Axis::Gamma0 => {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid("sweep gamma0", format!("must be > 0, got {v}")));
                }
                s.n0 = as_count("sweep gamma0 (p / gamma0)", (s.p as f64 / v).round())?;
            }
        }
        Ok(s)
    }

    pub fn gamma0(&self) -> f64 {
        self.p as f64 / self.n0 as f64
    }

    pub fn lambda0(&self) -> f64 {
        self.n0 as f64 * self.tau0
    }

    pub fn lambda1(&self) -> f64 {
        self.n1 as f64 * self.tau1
    }

    pub fn is_isotropic(&self) -> bool {
        let flat = |s: &Option<Vec<f64>>| s.as_ref().is_none_or(|v| v.iter().all(|&x| x == 1.0));
        flat(&self.spectrum0) && flat(&self.spectrum1)
    }

    pub fn task_pair(&self) -> Result<TaskPair, CliError> {
        let (w0, w1) = signal_pair(self.p, self.w0_norm_sq.sqrt(), self.rho, self.w1_norm_sq.sqrt())?;
        let cov = |s: &Option<Vec<f64>>| match s {
            Some(v) => Covariance::diagonal(v.clone()),
            None => Ok(Covariance::identity(self.p)),
        };
        Ok(TaskPair::new(
            self.n0,
            self.n1,
            self.sigma0,
            self.sigma1,
            cov(&self.spectrum0)?,
            cov(&self.spectrum1)?,
            w0,
            w1,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = "1"

[task]
p = 40
n0 = 10
n1 = 8
w0_norm_sq = 1.0
rho = 0.5
w1_norm_sq = 1.0
sigma0 = 0.5
sigma1 = 0.5

[penalties]
lambda0 = 5.0
lambda1 = 4.0

[mc]
replicates = 10
seed = 3

[sweep]
axis = "sigma0"
values = [0.1, 0.2]

[sweep2]
axis = "gamma0"
values = [2.0, 4.0, 8.0]
"#;

    #[test]
    fn lambda_converts_to_tau() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        let s = cfg.base_scenario();
        assert_eq!((s.tau0, s.tau1), (0.5, 0.5));
        assert_eq!(s.lambda0(), 5.0);
    }

    #[test]
    fn grid_is_row_major() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        let g = cfg.grid().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1].values, vec![0.1, 4.0]);
        assert_eq!(g[1].scenario.n0, 10);
        assert_eq!(g[2].scenario.n0, 5);
        assert_eq!(g[3].scenario.sigma0, 0.2);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_mixed_penalties() {
        let text = BASE.replace("lambda1 = 4.0", "tau1 = 4.0");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("penalties"));
    }

    #[test]
    fn rejects_unknown_fields_with_location() {
        let text = BASE.replace("seed = 3", "seed = 3\nsede = 4");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}
