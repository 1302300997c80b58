//! Transfer-optimal source regularization in the isotropic asymptotic model.
//!
//! Writing `W = ‖w0‖²` and `x = σ0² γ0`, the asymptotic transfer risk is
//! `‖w1‖² + f(a0)` with
//!
//! ```text
//! f(a) = −2 γ0 ρ a² + γ0² W a⁴ + σ0² γ0² a³,   a ∈ (0, 1/√γ0]
//! ```
//!
//! and `a0(τ0)` decreasing from `1/√γ0` at `τ0 = 0` to `0` as `τ0 → ∞`.

use serde::{Deserialize, Serialize};

use crate::det_equiv::isotropic_a;
use crate::error::{Error, Result};

/// Relative tolerance below which `τ0*` and `τ0ˢ` count as equal.
pub const COINCIDENT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    StrongerThanSource,
    WeakerThanSource,
    Coincident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentRegime {
    Poor,
    Critical,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceOptResult {
    pub a0_star: f64,
    pub tau0_star: f64,
    pub tau0_source_opt: f64,
    pub a0_source: f64,
    pub regime: Regime,
    pub sigma0_star: Option<f64>,
    pub alignment_regime: AlignmentRegime,
    /// The unconstrained root exceeded `1/√γ0` and was pulled back to it.
    pub clamped: bool,
}

fn check_gamma(gamma0: f64) -> Result<()> {
    if gamma0.is_finite() && gamma0 > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("gamma0", format!("must be finite and > 0, got {gamma0}")))
    }
}

fn check_signal(w0_norm_sq: f64) -> Result<()> {
    if w0_norm_sq.is_finite() && w0_norm_sq > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("w0_norm_sq", format!("must be finite and > 0, got {w0_norm_sq}")))
    }
}

fn check_sigma(sigma0: f64) -> Result<()> {
    if sigma0.is_finite() && sigma0 >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("sigma0", format!("must be finite and >= 0, got {sigma0}")))
    }
}

fn check_a(a0: f64, gamma0: f64) -> Result<()> {
    let upper = 1.0 / gamma0.sqrt();
    if a0 > 0.0 && a0 <= upper * (1.0 + 1e-15) {
        Ok(())
    } else {
        Err(Error::invalid("a0", format!("must lie in (0, {upper}], got {a0}")))
    }
}

pub fn transfer_objective(a0: f64, gamma0: f64, w0_norm_sq: f64, rho: f64, sigma0: f64) -> Result<f64> {
    check_gamma(gamma0)?;
    check_a(a0, gamma0)?;
    let a2 = a0 * a0;
    let g2 = gamma0 * gamma0;
    Ok(-2.0 * gamma0 * rho * a2 + g2 * w0_norm_sq * a2 * a2 + sigma0 * sigma0 * g2 * a2 * a0)
}

/// `f′(a) / (2 γ0 a) = −2ρ + 2 γ0 W a² + 1.5 σ0² γ0 a`.
pub fn objective_slope(a0: f64, gamma0: f64, w0_norm_sq: f64, rho: f64, sigma0: f64) -> f64 {
    -2.0 * rho + 2.0 * gamma0 * w0_norm_sq * a0 * a0 + 1.5 * sigma0 * sigma0 * gamma0 * a0
}

/// Positive root of `4 γ0 W a² + 3 σ0² γ0 a − 4ρ = 0`, written as
/// `8ρ / (3x + √(9x² + 64 γ0 W ρ))` so it stays accurate when `x` dominates.
/// Returns the root and whether it had to be clamped to `1/√γ0`.
pub fn a0_star(gamma0: f64, w0_norm_sq: f64, rho: f64, sigma0: f64) -> Result<(f64, bool)> {
    check_gamma(gamma0)?;
    check_signal(w0_norm_sq)?;
    check_sigma(sigma0)?;
    if !rho.is_finite() {
        return Err(Error::invalid("rho", "must be finite"));
    }
    if rho <= 0.0 {
        return Err(Error::NonPositiveAlignment(rho));
    }
    let x = sigma0 * sigma0 * gamma0;
    let root = 8.0 * rho / (3.0 * x + (9.0 * x * x + 64.0 * gamma0 * w0_norm_sq * rho).sqrt());
    let upper = 1.0 / gamma0.sqrt();
    if root > upper {
        Ok((upper, true))
    } else {
        Ok((root, false))
    }
}

/// Inverse of `a0(τ)`: `τ = (1 − γ a²) / a`.
pub fn tau_from_a(a0: f64, gamma0: f64) -> Result<f64> {
    check_gamma(gamma0)?;
    check_a(a0, gamma0)?;
    Ok(((1.0 - gamma0 * a0 * a0) / a0).max(0.0))
}

/// Penalty minimizing the source task's own risk: `γ0 σ0² / ‖w0‖²`.
pub fn source_optimal_tau(gamma0: f64, w0_norm_sq: f64, sigma0: f64) -> Result<f64> {
    check_gamma(gamma0)?;
    check_signal(w0_norm_sq)?;
    check_sigma(sigma0)?;
    Ok(gamma0 * sigma0 * sigma0 / w0_norm_sq)
}

pub fn alignment_regime(w0_norm_sq: f64, rho: f64) -> AlignmentRegime {
    let threshold = 0.75 * w0_norm_sq;
    if rho > threshold {
        AlignmentRegime::Strong
    } else if rho < threshold {
        AlignmentRegime::Poor
    } else {
        AlignmentRegime::Critical
    }
}

/// Source-noise level where `τ0*` crosses `τ0ˢ`; `None` unless `ρ > ¾‖w0‖²`.
pub fn sigma0_star(gamma0: f64, w0_norm_sq: f64, rho: f64) -> Result<Option<f64>> {
    check_gamma(gamma0)?;
    check_signal(w0_norm_sq)?;
    if rho <= 0.0 {
        return Err(Error::NonPositiveAlignment(rho));
    }
    if rho >= w0_norm_sq {
        return Err(Error::invalid(
            "rho",
            format!("a noise threshold needs rho < |w0|^2 = {w0_norm_sq}, got {rho}"),
        ));
    }
    let w = w0_norm_sq;
    let excess = w * rho - 0.75 * w * w;
    if excess <= 0.0 {
        return Ok(None);
    }
    let sigma_sq = 2.0 * (w * w - w * rho) / (gamma0 * excess).sqrt();
    Ok(Some(sigma_sq.sqrt()))
}

/// `x + √(9x² + 64 γ0 W ρ) − √(16x² + 64 γ0 W²)` at `x = σ0² γ0`; positive
/// exactly when `a0* > a0ˢ`, i.e. when the transfer optimum regularizes less.
pub fn crossover_function(sigma0: f64, gamma0: f64, w0_norm_sq: f64, rho: f64) -> f64 {
    let x = sigma0 * sigma0 * gamma0;
    let c = 64.0 * gamma0 * w0_norm_sq * rho;
    let d = 64.0 * gamma0 * w0_norm_sq * w0_norm_sq;
    x + (9.0 * x * x + c).sqrt() - (16.0 * x * x + d).sqrt()
}

pub fn optimize_source(gamma0: f64, w0_norm_sq: f64, rho: f64, sigma0: f64) -> Result<SourceOptResult> {
    let (a_star, clamped) = a0_star(gamma0, w0_norm_sq, rho, sigma0)?;
    let tau_star = tau_from_a(a_star, gamma0)?;
    let tau_source = source_optimal_tau(gamma0, w0_norm_sq, sigma0)?;
    let sigma_star = if rho < w0_norm_sq {
        sigma0_star(gamma0, w0_norm_sq, rho)?
    } else {
        None
    };
    let regime = if (tau_star - tau_source).abs() <= COINCIDENT_RTOL * tau_source.max(1.0) {
        Regime::Coincident
    } else if tau_star > tau_source {
        Regime::StrongerThanSource
    } else {
        Regime::WeakerThanSource
    };
    Ok(SourceOptResult {
        a0_star: a_star,
        tau0_star: tau_star,
        tau0_source_opt: tau_source,
        a0_source: isotropic_a(tau_source, gamma0),
        regime,
        sigma0_star: sigma_star,
        alignment_regime: alignment_regime(w0_norm_sq, rho),
        clamped,
    })
}
