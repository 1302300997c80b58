//! Finite-sample risk of the scratch and transfer estimators.
//!
//! Noise is always integrated out analytically; only the designs are drawn
//! at random. For fixed designs write `L1 = λ1 (X1ᵀX1 + λ1 I)⁻¹` (the target
//! shrinkage, `I − P1` at `λ1 = 0`), `u = (X0ᵀX0 + λ0 I)⁻¹ X0ᵀX0 w0` (the
//! noiseless source fit) and `g = L1 w1`. Then
//!
//! ```text
//! scratch risk   = ‖g‖²_Σ1 + σ1² ‖M1 X1ᵀ‖²_Σ1,F
//! transfer risk  = ‖L1 u − g‖²_Σ1 + σ0² ‖L1 M0 X0ᵀ‖²_Σ1,F + σ1² ‖M1 X1ᵀ‖²_Σ1,F
//! ```
//!
//! Both designs are reduced to thin SVDs once, after which every quantity is
//! a small dense computation in the `n0`/`n1`-dimensional row spaces. The
//! source penalty only rescales singular values, so a whole `λ0` grid costs
//! little more than a single point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, ThinSvd, Vector};
use crate::stats::RunningStats;
use crate::task::{sample_designs, TaskPair};

/// Conditional-on-design risk terms. Variances are reported without their
/// `σ²` factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTerms {
    /// `‖L1 w1‖²_Σ1`
    pub scratch_bias: f64,
    /// `‖M1 X1ᵀ‖²_Σ1,F`
    pub scratch_var: f64,
    /// `‖L1 u − L1 w1‖²_Σ1`
    pub transfer_bias: f64,
    /// `‖L1 M0 X0ᵀ‖²_Σ1,F`
    pub transfer_var_source: f64,
    /// `‖M1 X1ᵀ‖²_Σ1,F`, identical to `scratch_var`.
    pub transfer_var_target: f64,
    /// `2⟨L1 u, L1 w1⟩_Σ1`
    pub alignment_gain: f64,
    /// `‖L1 u‖²_Σ1`
    pub prior_bias: f64,
}

impl RiskTerms {
    pub fn scratch_risk(&self, sigma1: f64) -> f64 {
        self.scratch_bias + sigma1 * sigma1 * self.scratch_var
    }

    pub fn transfer_risk(&self, sigma0: f64, sigma1: f64) -> f64 {
        self.transfer_bias
            + sigma0 * sigma0 * self.transfer_var_source
            + sigma1 * sigma1 * self.transfer_var_target
    }

    /// Left side of the transfer-benefit inequality, in risk units.
    pub fn boundary_lhs(&self) -> f64 {
        self.alignment_gain
    }

    /// Right side of the transfer-benefit inequality, in risk units.
    pub fn boundary_rhs(&self, sigma0: f64) -> f64 {
        self.prior_bias + sigma0 * sigma0 * self.transfer_var_source
    }

    /// Scratch minus transfer risk. The target-noise terms are the same
    /// number on both sides and are dropped, so this does not depend on `σ1`.
    pub fn delta(&self, sigma0: f64) -> f64 {
        self.scratch_bias - self.transfer_bias - sigma0 * sigma0 * self.transfer_var_source
    }
}

/// Thin SVDs of one replicate's source and target designs.
#[derive(Debug, Clone)]
pub struct DesignFactors {
    source: ThinSvd,
    target: ThinSvd,
}

impl DesignFactors {
    pub fn new(x0: &Mat, x1: &Mat) -> Result<Self> {
        if x0.ncols() != x1.ncols() {
            return Err(Error::mismatch("DesignFactors", x0.ncols(), x1.ncols()));
        }
        Ok(Self {
            source: ThinSvd::of_design(x0)?,
            target: ThinSvd::of_design(x1)?,
        })
    }

    /// Everything that depends on `λ1` but not on `λ0`.
    pub fn target_view(&self, tp: &TaskPair, lambda1: f64) -> Result<TargetView> {
        check_penalty("lambda1", lambda1)?;
        let p = tp.p();
        if self.source.right.nrows() != p {
            return Err(Error::mismatch("target_view", p, self.source.right.nrows()));
        }
        let cov1 = tp.cov1();
        let v1 = &self.target.right;
        let s1 = &self.target.singular;
        let keep1 = s1.map(|s| s * s / (s * s + lambda1));

        let shrink = |m: &Mat| -> Mat {
            let mut coeff = v1.transpose() * m;
            for (i, mut row) in coeff.row_iter_mut().enumerate() {
                row *= keep1[i];
            }
            m - v1 * coeff
        };

        let g = shrink(&Mat::from_column_slice(p, 1, tp.w1().as_slice())).column(0).into_owned();
        let scratch_bias = cov1.norm_sq(&g);

        let col_norms = column_sigma_norms(v1, cov1);
        let scratch_var = s1
            .iter()
            .zip(col_norms.iter())
            .map(|(&s, &c)| {
                let f = s / (s * s + lambda1);
                f * f * c
            })
            .sum();

        let shrunk_source = shrink(&self.source.right);
        let weighted = cov1.apply_mat(&shrunk_source);
        let gram = shrunk_source.transpose() * &weighted;
        let cross = weighted.transpose() * &g;
        let source_coords = self.source.right.transpose() * tp.w0();

        Ok(TargetView {
            scratch_bias,
            scratch_var,
            gram,
            cross,
            source_coords,
            source_singular: self.source.singular.clone(),
        })
    }
}

fn column_sigma_norms(m: &Mat, cov: &crate::task::Covariance) -> Vec<f64> {
    if cov.is_identity() {
        return m.column_iter().map(|c| c.norm_squared()).collect();
    }
    let weighted = cov.apply_mat(m);
    m.column_iter()
        .zip(weighted.column_iter())
        .map(|(a, b)| a.dot(&b))
        .collect()
}

fn check_penalty(name: &'static str, lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("penalty must be finite and >= 0, got {lambda}")))
    }
}

/// Per-replicate quantities for a fixed target penalty.
#[derive(Debug, Clone)]
pub struct TargetView {
    scratch_bias: f64,
    scratch_var: f64,
    /// `(L1 V0)ᵀ Σ1 (L1 V0)`
    gram: Mat,
    /// `(L1 V0)ᵀ Σ1 g`
    cross: Vector,
    /// `V0ᵀ w0`
    source_coords: Vector,
    source_singular: Vector,
}

impl TargetView {
    pub fn terms(&self, lambda0: f64) -> Result<RiskTerms> {
        check_penalty("lambda0", lambda0)?;
        let s = &self.source_singular;
        let fit_gain = s.map(|s| s * s / (s * s + lambda0));
        let coef = fit_gain.component_mul(&self.source_coords);
        let prior_bias = coef.dot(&(&self.gram * &coef)).max(0.0);
        let inner = coef.dot(&self.cross);
        let transfer_var_source = s
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let c = s / (s * s + lambda0);
                c * c * self.gram[(j, j)]
            })
            .sum();
        Ok(RiskTerms {
            scratch_bias: self.scratch_bias,
            scratch_var: self.scratch_var,
            transfer_bias: (prior_bias - 2.0 * inner + self.scratch_bias).max(0.0),
            transfer_var_source,
            transfer_var_target: self.scratch_var,
            alignment_gain: 2.0 * inner,
            prior_bias,
        })
    }
}

/// Risk terms for the given designs, no expectation over `X`.
pub fn conditional_risk_terms(
    x0: &Mat,
    x1: &Mat,
    tp: &TaskPair,
    lambda0: f64,
    lambda1: f64,
) -> Result<RiskTerms> {
    if x0.shape() != (tp.n0(), tp.p()) {
        return Err(Error::mismatch(
            "conditional_risk_terms",
            format!("X0 {}x{}", tp.n0(), tp.p()),
            format!("{}x{}", x0.nrows(), x0.ncols()),
        ));
    }
    if x1.shape() != (tp.n1(), tp.p()) {
        return Err(Error::mismatch(
            "conditional_risk_terms",
            format!("X1 {}x{}", tp.n1(), tp.p()),
            format!("{}x{}", x1.nrows(), x1.ncols()),
        ));
    }
    DesignFactors::new(x0, x1)?.target_view(tp, lambda1)?.terms(lambda0)
}

/// Penalty pair `(λ0, λ1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda0: f64,
    pub lambda1: f64,
}

impl Penalties {
    pub fn new(lambda0: f64, lambda1: f64) -> Self {
        Self { lambda0, lambda1 }
    }

    /// `λi = ni τi`.
    pub fn from_tau(tp: &TaskPair, tau0: f64, tau1: f64) -> Self {
        Self {
            lambda0: tp.n0() as f64 * tau0,
            lambda1: tp.n1() as f64 * tau1,
        }
    }
}

/// Risk terms of every replicate at every penalty pair, indexed
/// `[point][replicate]`. All points share the same designs.
pub fn mc_terms(
    tp: &TaskPair,
    points: &[Penalties],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<RiskTerms>>> {
    if replicates < 2 {
        return Err(Error::invalid("replicates", format!("need at least 2, got {replicates}")));
    }
    for pt in points {
        check_penalty("lambda0", pt.lambda0)?;
        check_penalty("lambda1", pt.lambda1)?;
    }
    let mut lambda1s: Vec<f64> = points.iter().map(|pt| pt.lambda1).collect();
    lambda1s.sort_by(f64::total_cmp);
    lambda1s.dedup();

    let per_replicate: Vec<Vec<RiskTerms>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (x0, x1) = sample_designs(tp, seed, r);
            let factors = DesignFactors::new(&x0, &x1)?;
            let views = lambda1s
                .iter()
                .map(|&l1| factors.target_view(tp, l1))
                .collect::<Result<Vec<_>>>()?;
            points
                .iter()
                .map(|pt| {
                    let idx = lambda1s.partition_point(|&l| l < pt.lambda1);
                    views[idx].terms(pt.lambda0)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok((0..points.len())
        .map(|i| per_replicate.iter().map(|row| row[i]).collect())
        .collect())
}

/// Monte Carlo risk summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scratch_risk: f64,
    pub transfer_risk: f64,
    /// `B`
    pub transfer_bias: f64,
    /// `σ0² V0`
    pub transfer_var_source: f64,
    /// `σ1² V1`
    pub transfer_var_target: f64,
    /// `scratch_risk − transfer_risk`
    pub delta: f64,
    pub mc_replicates: usize,
    /// Standard error of `delta`.
    pub mc_stderr: f64,
}

impl RiskReport {
    /// Aggregates replicates in slice order.
    pub fn from_terms(terms: &[RiskTerms], sigma0: f64, sigma1: f64) -> Self {
        let (s0, s1) = (sigma0 * sigma0, sigma1 * sigma1);
        let mut scratch = RunningStats::new();
        let mut bias = RunningStats::new();
        let mut v0 = RunningStats::new();
        let mut v1 = RunningStats::new();
        let mut delta = RunningStats::new();
        for t in terms {
            scratch.push(t.scratch_risk(sigma1));
            bias.push(t.transfer_bias);
            v0.push(s0 * t.transfer_var_source);
            v1.push(s1 * t.transfer_var_target);
            delta.push(t.delta(sigma0));
        }
        let transfer_risk = bias.mean() + v0.mean() + v1.mean();
        Self {
            scratch_risk: scratch.mean(),
            transfer_risk,
            transfer_bias: bias.mean(),
            transfer_var_source: v0.mean(),
            transfer_var_target: v1.mean(),
            delta: delta.mean(),
            mc_replicates: terms.len(),
            mc_stderr: delta.stderr(),
        }
    }
}

pub fn mc_expected_risk(
    tp: &TaskPair,
    lambda0: f64,
    lambda1: f64,
    replicates: usize,
    seed: u64,
) -> Result<RiskReport> {
    let terms = mc_terms(tp, &[Penalties::new(lambda0, lambda1)], replicates, seed)?;
    Ok(RiskReport::from_terms(&terms[0], tp.sigma0(), tp.sigma1()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    FiniteGeneral,
    FiniteIsotropicRidgeless,
    Asymptotic,
    AsymptoticIsotropic,
}

/// Both sides of a transfer-benefit inequality. Transfer helps iff `lhs > rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVerdict {
    pub lhs: f64,
    pub rhs: f64,
    pub transfer_beneficial: bool,
    pub criterion: Criterion,
    /// Standard error of `lhs − rhs` for Monte Carlo criteria.
    pub mc_stderr: Option<f64>,
}

impl BoundaryVerdict {
    pub fn new(lhs: f64, rhs: f64, criterion: Criterion) -> Self {
        Self {
            lhs,
            rhs,
            transfer_beneficial: lhs > rhs,
            criterion,
            mc_stderr: None,
        }
    }

    /// Aggregates replicates in slice order.
    pub fn from_terms(terms: &[RiskTerms], sigma0: f64) -> Self {
        let lhs: RunningStats = terms.iter().map(|t| t.boundary_lhs()).collect();
        let rhs: RunningStats = terms.iter().map(|t| t.boundary_rhs(sigma0)).collect();
        let diff: RunningStats = terms
            .iter()
            .map(|t| t.boundary_lhs() - t.boundary_rhs(sigma0))
            .collect();
        Self {
            mc_stderr: Some(diff.stderr()),
            ..Self::new(lhs.mean(), rhs.mean(), Criterion::FiniteGeneral)
        }
    }
}

/// Monte Carlo evaluation of the finite-sample transfer-benefit inequality
///
/// `2 E⟨L1 u, L1 w1⟩_Σ1 > E‖L1 u‖²_Σ1 + σ0² E‖L1 M0 X0ᵀ‖²_Σ1,F`.
///
/// Both sides carry the common `λ1²` factor (they are expressed through
/// `L1 = λ1 M1`), so `lhs − rhs` is exactly the risk difference
/// `scratch − transfer` and the `λ1 = 0` limit is well defined.
pub fn finite_boundary(
    tp: &TaskPair,
    lambda0: f64,
    lambda1: f64,
    replicates: usize,
    seed: u64,
) -> Result<BoundaryVerdict> {
    let terms = mc_terms(tp, &[Penalties::new(lambda0, lambda1)], replicates, seed)?;
    Ok(BoundaryVerdict::from_terms(&terms[0], tp.sigma0()))
}

/// Closed-form boundary for isotropic Gaussian designs with `λ0 = λ1 = 0`:
/// transfer helps iff `2ρ > ‖w0‖² + σ0² p / (p − n0 − 1)`.
pub fn isotropic_ridgeless_boundary(
    w0_norm_sq: f64,
    rho: f64,
    sigma0: f64,
    n0: usize,
    p: usize,
) -> Result<BoundaryVerdict> {
    if n0 + 1 >= p {
        return Err(Error::invalid("n0", format!("need n0 < p - 1, got n0 = {n0}, p = {p}")));
    }
    let inflation = p as f64 / (p - n0 - 1) as f64;
    Ok(BoundaryVerdict::new(
        2.0 * rho,
        w0_norm_sq + sigma0 * sigma0 * inflation,
        Criterion::FiniteIsotropicRidgeless,
    ))
}
