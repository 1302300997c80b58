//! Deterministic equivalents of the ridge resolvents.
//!
//! With `τ = λ / n` and `γ = p / n`, the resolvent is replaced by
//! `Q(τ) = (τ I + δ(τ) Σ)⁻¹`, where `δ` is the positive root of
//!
//! ```text
//! δ = γ · p⁻¹ Σⱼ sⱼ / (τ + δ sⱼ)
//! ```
//!
//! over the eigenvalues `sⱼ` of `Σ`. For `Σ = I` this gives `Q = a I` with
//! `γ a² + τ a − 1 = 0` and `δ = γ a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_risk::{BoundaryVerdict, Criterion};
use crate::linalg::{Mat, Vector};
use crate::task::{Covariance, TaskPair};

pub const FIXED_POINT_RTOL: f64 = 1e-12;
const DAMPING: f64 = 0.5;
const MAX_ITERATIONS: usize = 100_000;

/// Solver diagnostics for one `(spectrum, γ, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub delta: f64,
    /// `|δ − γ p⁻¹ Σ sⱼ/(τ + δ sⱼ)|`
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub used_bisection: bool,
}

fn validate_inputs(spectrum: &[f64], gamma: f64, tau: f64) -> Result<()> {
    if spectrum.is_empty() {
        return Err(Error::invalid("spectrum", "must be nonempty"));
    }
    if let Some(bad) = spectrum.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::invalid("spectrum", format!("eigenvalue {bad} is not finite and >= 0")));
    }
    if spectrum.iter().all(|&s| s == 0.0) {
        return Err(Error::invalid("spectrum", "all eigenvalues are zero"));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be finite and > 0, got {gamma}")));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("tau", format!("must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

fn trace_map(spectrum: &[f64], gamma: f64, tau: f64, delta: f64) -> f64 {
    let sum: f64 = spectrum
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| s / (tau + delta * s))
        .sum();
    gamma * sum / spectrum.len() as f64
}

/// Damped fixed-point iteration from `δ = √γ · mean(s)`; if that stalls,
/// bisection on the increasing function `δ ↦ δ − γ p⁻¹ Σ sⱼ/(τ + δ sⱼ)`.
pub fn solve_delta(spectrum: &[f64], gamma: f64, tau: f64) -> Result<FixedPoint> {
    validate_inputs(spectrum, gamma, tau)?;
    let mean = spectrum.iter().sum::<f64>() / spectrum.len() as f64;
    let tolerance = |d: f64| FIXED_POINT_RTOL * d.max(1.0);

    let mut delta = gamma.sqrt() * mean;
    for it in 1..=MAX_ITERATIONS {
        let next = (1.0 - DAMPING) * delta + DAMPING * trace_map(spectrum, gamma, tau, delta);
        delta = next;
        let residual = (delta - trace_map(spectrum, gamma, tau, delta)).abs();
        if residual < tolerance(delta) && delta > 0.0 {
            return Ok(FixedPoint {
                delta,
                residual,
                iterations: it,
                converged: true,
                used_bisection: false,
            });
        }
        if !delta.is_finite() || delta <= 0.0 {
            break;
        }
    }
    bisect(spectrum, gamma, tau)
}

fn bisect(spectrum: &[f64], gamma: f64, tau: f64) -> Result<FixedPoint> {
    let g = |d: f64| d - trace_map(spectrum, gamma, tau, d);
    let smax = spectrum.iter().copied().fold(0.0, f64::max);
    let mut lo = 1e-12;
    let mut hi = if tau > 0.0 { gamma * smax / tau } else { 0.0 } + gamma.sqrt() * smax.max(1.0);
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence {
                iterations: MAX_ITERATIONS,
                residual: f64::INFINITY,
            });
        }
    }
    if g(lo) > 0.0 {
        lo = 0.0;
    }
    let mut iterations = 0;
    while iterations < 2_000 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    let residual = g(delta).abs();
    if residual < FIXED_POINT_RTOL * delta.max(1.0) && delta > 0.0 {
        Ok(FixedPoint {
            delta,
            residual,
            iterations: MAX_ITERATIONS + iterations,
            converged: true,
            used_bisection: true,
        })
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS + iterations,
            residual,
        })
    }
}

/// Positive root of `γ a² + τ a − 1 = 0`, i.e. `(−τ + √(τ² + 4γ)) / (2γ)`,
/// evaluated in the cancellation-free form `2 / (τ + √(τ² + 4γ))`.
pub fn isotropic_a(tau: f64, gamma: f64) -> f64 {
    2.0 / (tau + (tau * tau + 4.0 * gamma).sqrt())
}

/// Solved deterministic-equivalent context for one task.
#[derive(Debug, Clone)]
pub struct DeContext {
    pub gamma: f64,
    pub tau: f64,
    pub delta: f64,
    /// Eigenvalues of `Σ`, matched with `basis`.
    pub spectrum: Vec<f64>,
    /// Eigenvectors of `Σ`; `None` for the standard basis.
    pub basis: Option<Mat>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl DeContext {
    pub fn solve(cov: &Covariance, gamma: f64, tau: f64) -> Result<Self> {
        let spectrum = cov.spectrum();
        let fp = solve_delta(&spectrum, gamma, tau)?;
        Ok(Self {
            gamma,
            tau,
            delta: fp.delta,
            spectrum,
            basis: cov.eigenbasis().cloned(),
            converged: fp.converged,
            iterations: fp.iterations,
            residual: fp.residual,
        })
    }

    pub fn resolvent(&self) -> Result<Resolvent> {
        let mut eigenvalues = Vec::with_capacity(self.spectrum.len());
        for &s in &self.spectrum {
            let denom = self.tau + self.delta * s;
            if denom <= 0.0 {
                return Err(Error::invalid("tau", "resolvent is singular (tau = 0 with a zero eigenvalue)"));
            }
            eigenvalues.push(1.0 / denom);
        }
        Ok(Resolvent {
            eigenvalues: Vector::from_vec(eigenvalues),
            basis: self.basis.clone(),
        })
    }
}

/// `Q = (τ I + δ Σ)⁻¹` held in the eigenbasis of `Σ`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub eigenvalues: Vector,
    basis: Option<Mat>,
}

impl Resolvent {
    pub fn apply(&self, v: &Vector) -> Vector {
        match &self.basis {
            None => self.eigenvalues.component_mul(v),
            Some(b) => b * self.eigenvalues.component_mul(&(b.transpose() * v)),
        }
    }

    pub fn to_matrix(&self) -> Mat {
        match &self.basis {
            None => Mat::from_diagonal(&self.eigenvalues),
            Some(b) => {
                let mut scaled = b.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= self.eigenvalues[j];
                }
                scaled * b.transpose()
            }
        }
    }
}

/// `p⁻¹ Tr(Q1 Σ1 Q1 (Q0 − τ0 Q0²))` at the instance dimension.
///
/// When both covariances are diagonal in the standard basis this is a sum over
/// coordinates; otherwise the `p × p` products are formed explicitly.
pub fn t_functional(ctx0: &DeContext, ctx1: &DeContext, sigma1: &Covariance) -> Result<f64> {
    let p = ctx0.spectrum.len();
    if ctx1.spectrum.len() != p || sigma1.dim() != p {
        return Err(Error::mismatch(
            "t_functional",
            p,
            format!("{} and {}", ctx1.spectrum.len(), sigma1.dim()),
        ));
    }
    let q0 = ctx0.resolvent()?;
    let q1 = ctx1.resolvent()?;
    if ctx0.basis.is_none() && ctx1.basis.is_none() && sigma1.is_diagonal() {
        let s1 = sigma1.spectrum();
        let total: f64 = (0..p)
            .map(|j| {
                let a0 = q0.eigenvalues[j];
                let a1 = q1.eigenvalues[j];
                s1[j] * a1 * a1 * (a0 - ctx0.tau * a0 * a0)
            })
            .sum();
        return Ok(total / p as f64);
    }
    let q0m = q0.to_matrix();
    let q1m = q1.to_matrix();
    let left = &q1m * sigma1.apply_mat(&q1m);
    let right = &q0m - (&q0m * &q0m) * ctx0.tau;
    Ok(left.dot(&right.transpose()) / p as f64)
}

/// Deterministic-equivalent transfer-benefit inequality
///
/// `2⟨Q1 (I − τ0 Q0) w0, Q1 w1⟩_Σ1 > ‖Q1 (I − τ0 Q0) w0‖²_Σ1 + σ0² γ0 t(τ0, τ1)`
///
/// with `γi = p / ni` taken from the instance.
pub fn asymptotic_boundary(tp: &TaskPair, tau0: f64, tau1: f64) -> Result<BoundaryVerdict> {
    let ctx0 = DeContext::solve(tp.cov0(), tp.gamma0(), tau0)?;
    let ctx1 = DeContext::solve(tp.cov1(), tp.gamma1(), tau1)?;
    let q0 = ctx0.resolvent()?;
    let q1 = ctx1.resolvent()?;
    let w0 = tp.w0();
    let filtered = q1.apply(&(w0 - q0.apply(w0) * tau0));
    let target = q1.apply(tp.w1());
    let cov1 = tp.cov1();
    let t = t_functional(&ctx0, &ctx1, cov1)?;
    let lhs = 2.0 * cov1.inner(&filtered, &target);
    let rhs = cov1.norm_sq(&filtered) + tp.sigma0() * tp.sigma0() * tp.gamma0() * t;
    Ok(BoundaryVerdict::new(lhs, rhs, Criterion::Asymptotic))
}

/// Isotropic closed form: transfer helps iff `2ρ > γ0 a0² ‖w0‖² + σ0² γ0 a0`.
/// Depends on nothing on the target side.
pub fn isotropic_asymptotic_boundary(
    w0_norm_sq: f64,
    rho: f64,
    sigma0: f64,
    gamma0: f64,
    tau0: f64,
) -> Result<BoundaryVerdict> {
    if !(gamma0.is_finite() && gamma0 > 0.0) {
        return Err(Error::invalid("gamma0", format!("must be finite and > 0, got {gamma0}")));
    }
    if !(tau0.is_finite() && tau0 >= 0.0) {
        return Err(Error::invalid("tau0", format!("must be finite and >= 0, got {tau0}")));
    }
    let a0 = isotropic_a(tau0, gamma0);
    Ok(BoundaryVerdict::new(
        2.0 * rho,
        gamma0 * a0 * a0 * w0_norm_sq + sigma0 * sigma0 * gamma0 * a0,
        Criterion::AsymptoticIsotropic,
    ))
}

/// Asymptotic risk gain `R^S − R^TL` in the isotropic case after dropping the
/// common target factor `a1²`: `γ0 a0² (2ρ − γ0 a0² ‖w0‖² − σ0² γ0 a0)`.
pub fn isotropic_asymptotic_gain(
    w0_norm_sq: f64,
    rho: f64,
    sigma0: f64,
    gamma0: f64,
    tau0: f64,
) -> f64 {
    let a0 = isotropic_a(tau0, gamma0);
    gamma0 * a0 * a0 * (2.0 * rho - gamma0 * a0 * a0 * w0_norm_sq - sigma0 * sigma0 * gamma0 * a0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::task::{make_isotropic_pair, signal_pair, PairSpec};
    use approx::assert_relative_eq;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn isotropic_golden_ratio() {
        let fp = solve_delta(&[1.0; 10], 1.0, 1.0).unwrap();
        assert_relative_eq!(fp.delta, GOLDEN, epsilon = 1e-12);
        assert!(fp.converged);
        assert!(fp.residual < 1e-12);
        assert_relative_eq!(isotropic_a(1.0, 1.0), GOLDEN, epsilon = 1e-15);
    }

    #[test]
    fn ridgeless_isotropic_delta_is_sqrt_gamma() {
        for gamma in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let fp = solve_delta(&[1.0; 7], gamma, 0.0).unwrap();
            assert_relative_eq!(fp.delta, gamma.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_is_gamma_times_a() {
        for gamma in [0.5, 1.0, 2.0, 8.0] {
            for tau in [0.0, 0.01, 0.3, 1.0, 10.0] {
                let a = isotropic_a(tau, gamma);
                let fp = solve_delta(&[1.0; 3], gamma, tau).unwrap();
                assert!((fp.delta - gamma * a).abs() < 1e-10);
                assert!((a * (tau + gamma * a) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_decreases_in_tau() {
        let spectrum = [3.0, 2.0, 1.0, 0.5, 0.1];
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let tau = 0.001 * 1.3f64.powi(k);
            let d = solve_delta(&spectrum, 1.7, tau).unwrap().delta;
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn bisection_fallback_agrees() {
        let spectrum = [5.0, 1.0, 0.2, 0.0];
        for (gamma, tau) in [(2.0, 0.1), (0.5, 3.0), (1.0, 0.0)] {
            let direct = solve_delta(&spectrum, gamma, tau).unwrap();
            let bis = bisect(&spectrum, gamma, tau).unwrap();
            assert!(bis.used_bisection);
            assert!((direct.delta - bis.delta).abs() < 1e-10 * direct.delta.max(1.0));
        }
    }

    #[test]
    fn solver_rejects_bad_input() {
        assert!(solve_delta(&[], 1.0, 1.0).is_err());
        assert!(solve_delta(&[0.0, 0.0], 1.0, 1.0).is_err());
        assert!(solve_delta(&[1.0, -1.0], 1.0, 1.0).is_err());
        assert!(solve_delta(&[1.0], 0.0, 1.0).is_err());
        assert!(solve_delta(&[1.0], 1.0, -0.1).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let id = Covariance::identity(4);
        let q = DeContext::solve(&id, 1.0, 0.0).unwrap().resolvent().unwrap();
        assert!((q.to_matrix() - Mat::identity(4, 4)).norm() < 1e-12);

        let q = DeContext::solve(&id, 4.0, 0.0).unwrap().resolvent().unwrap();
        assert!((q.to_matrix() - Mat::identity(4, 4) * 0.5).norm() < 1e-12);

        let diag = Covariance::diagonal(vec![2.0, 1.0]).unwrap();
        let ctx = DeContext::solve(&diag, 1.5, 0.4).unwrap();
        let q = ctx.resolvent().unwrap();
        assert_relative_eq!(q.eigenvalues[0], 1.0 / (0.4 + 2.0 * ctx.delta), epsilon = 1e-15);
        assert_relative_eq!(q.eigenvalues[1], 1.0 / (0.4 + ctx.delta), epsilon = 1e-15);
    }

    #[test]
    fn resolvent_in_rotated_basis() {
        let a = Mat::from_fn(5, 5, |i, j| ((3 * i + 2 * j) % 7) as f64 - 3.0);
        let sigma = SpdMatrix::new(&a * a.transpose() / 5.0 + Mat::identity(5, 5) * 0.3).unwrap();
        let cov = Covariance::dense(sigma.clone()).unwrap();
        let ctx = DeContext::solve(&cov, 2.0, 0.7).unwrap();
        let q = ctx.resolvent().unwrap().to_matrix();
        let direct = (Mat::identity(5, 5) * 0.7 + sigma.as_mat() * ctx.delta)
            .try_inverse()
            .unwrap();
        assert!((q - direct).norm() < 1e-10);
    }

    #[test]
    fn singular_resolvent_is_an_error() {
        let cov = Covariance::diagonal(vec![1.0, 0.0, 2.0]).unwrap();
        let ctx = DeContext::solve(&cov, 2.0, 0.0).unwrap();
        assert!(ctx.resolvent().is_err());
    }

    #[test]
    fn t_isotropic_identity() {
        for (g0, t0) in [(1.0, 0.0), (2.0, 0.5), (0.5, 3.0), (8.0, 0.01)] {
            let id = Covariance::identity(6);
            let c0 = DeContext::solve(&id, g0, t0).unwrap();
            let c1 = DeContext::solve(&id, 1.3, 0.2).unwrap();
            let t = t_functional(&c0, &c1, &id).unwrap();
            let a0 = isotropic_a(t0, g0);
            let a1 = isotropic_a(0.2, 1.3);
            assert!((t - a1 * a1 * g0 * a0.powi(3)).abs() < 1e-12);
            assert!(((a0 - t0 * a0 * a0) - g0 * a0.powi(3)).abs() < 1e-12);
            if t0 == 0.0 {
                assert!((t - a1 * a1 / g0.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_dense_path_matches_diagonal_path() {
        let d0 = vec![2.0, 1.0, 0.5, 0.25];
        let d1 = vec![1.0, 3.0, 0.5, 2.0];
        let diag0 = Covariance::diagonal(d0.clone()).unwrap();
        let diag1 = Covariance::diagonal(d1.clone()).unwrap();
        let dense0 = Covariance::dense(SpdMatrix::new(Mat::from_diagonal(&Vector::from_vec(d0))).unwrap()).unwrap();
        let dense1 = Covariance::dense(SpdMatrix::new(Mat::from_diagonal(&Vector::from_vec(d1))).unwrap()).unwrap();
        let fast = t_functional(
            &DeContext::solve(&diag0, 2.0, 0.3).unwrap(),
            &DeContext::solve(&diag1, 1.5, 0.6).unwrap(),
            &diag1,
        )
        .unwrap();
        let slow = t_functional(
            &DeContext::solve(&dense0, 2.0, 0.3).unwrap(),
            &DeContext::solve(&dense1, 1.5, 0.6).unwrap(),
            &dense1,
        )
        .unwrap();
        assert!(fast > 0.0);
        assert!((fast - slow).abs() < 1e-12);
    }

    fn iso_pair(p: usize, n0: usize, n1: usize, rho: f64, sigma0: f64) -> TaskPair {
        make_isotropic_pair(&PairSpec {
            p,
            n0,
            n1,
            w0_norm: 1.0,
            rho,
            w1_norm: 1.0,
            sigma0,
            sigma1: 0.3,
        })
        .unwrap()
    }

    #[test]
    fn general_boundary_reduces_to_isotropic() {
        let tp = iso_pair(60, 20, 15, 0.7, 0.8);
        for (t0, t1) in [(0.0, 0.5), (0.5, 0.5), (2.0, 0.1)] {
            let general = asymptotic_boundary(&tp, t0, t1).unwrap();
            let iso = isotropic_asymptotic_boundary(1.0, 0.7, 0.8, tp.gamma0(), t0).unwrap();
            let a0 = isotropic_a(t0, tp.gamma0());
            let a1 = isotropic_a(t1, tp.gamma1());
            let common = a1 * a1 * tp.gamma0() * a0 * a0;
            assert!((general.lhs / common - iso.lhs).abs() < 1e-10);
            assert!((general.rhs / common - iso.rhs).abs() < 1e-10);
            assert!((general.lhs / general.rhs - iso.lhs / iso.rhs).abs() < 1e-10);
            assert_eq!(general.transfer_beneficial, iso.transfer_beneficial);
        }
    }

    #[test]
    fn aligned_noiseless_ridgeless_benefits() {
        let tp = iso_pair(40, 20, 10, 1.0, 0.0);
        // γ0 = 2 here; use a γ0 = 1 instance through the closed form
        let v = asymptotic_boundary(&tp, 0.0, 0.4).unwrap();
        assert!(v.transfer_beneficial);
        let iso = isotropic_asymptotic_boundary(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!((iso.lhs, iso.rhs), (2.0, 1.0));
    }

    #[test]
    fn pure_noise_prior_never_helps() {
        let (_, w1) = signal_pair(30, 1.0, 0.0, 1.0).unwrap();
        let tp = TaskPair::new(
            10,
            10,
            0.5,
            0.1,
            Covariance::identity(30),
            Covariance::identity(30),
            Vector::zeros(30),
            w1,
        )
        .unwrap();
        let v = asymptotic_boundary(&tp, 0.3, 0.3).unwrap();
        assert_eq!(v.lhs, 0.0);
        assert!(v.rhs >= 0.0);
        assert!(!v.transfer_beneficial);
    }

    #[test]
    fn isotropic_closed_form_examples() {
        let v = isotropic_asymptotic_boundary(1.0, 0.6, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(v.rhs, 1.0);
        assert!(v.transfer_beneficial);

        let v = isotropic_asymptotic_boundary(1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v.rhs, 1.0, epsilon = 1e-12);
        assert!(isotropic_asymptotic_boundary(1.0, 0.5 + 1e-9, 1.0, 1.0, 1.0).unwrap().transfer_beneficial);
        assert!(!isotropic_asymptotic_boundary(1.0, 0.5 - 1e-9, 1.0, 1.0, 1.0).unwrap().transfer_beneficial);

        let mut last = -1.0;
        for k in 0..20 {
            let rhs = isotropic_asymptotic_boundary(1.0, 0.8, 0.1 * k as f64, 2.0, 0.5).unwrap().rhs;
            assert!(rhs > last);
            last = rhs;
        }
    }

    #[test]
    fn isotropic_a_limits() {
        let mut last = f64::INFINITY;
        for k in 0..30 {
            let tau = 10f64.powf(-3.0 + 0.3 * k as f64);
            let a = isotropic_a(tau, 2.0);
            assert!(a < last && a > 0.0);
            last = a;
        }
        let tau = 1e8;
        assert!((isotropic_a(tau, 2.0) * tau - 1.0).abs() < 1e-12);
        assert_relative_eq!(isotropic_a(0.0, 4.0), 0.5);
    }

    #[test]
    fn verdict_ignores_target_side_when_isotropic() {
        let tp = iso_pair(80, 20, 10, 0.55, 0.6);
        let base = asymptotic_boundary(&tp, 0.4, 0.1).unwrap().transfer_beneficial;
        for t1 in [0.0, 0.01, 0.3, 1.0, 5.0, 50.0] {
            assert_eq!(asymptotic_boundary(&tp, 0.4, t1).unwrap().transfer_beneficial, base);
        }
        for n1 in [5, 20, 40, 70] {
            let tp2 = tp.clone().with_sample_sizes(20, n1).unwrap();
            assert_eq!(asymptotic_boundary(&tp2, 0.4, 0.7).unwrap().transfer_beneficial, base);
        }
    }
}
