//! Risk decomposition against the estimator itself: the transfer fit is linear
//! in `(y0, y1)`, so probing it with unit responses recovers the two linear
//! maps, and the noise expectation follows without any risk formula.

use proptest::prelude::*;
use ridge_transfer::finite_risk::conditional_risk_terms;
use ridge_transfer::linalg::{Mat, Vector};
use ridge_transfer::task::{sample_designs, signal_pair};
use ridge_transfer::{fit_source, fit_transfer, Covariance, TaskPair};

fn transfer_fit(x0: &Mat, x1: &Mat, y0: &Vector, y1: &Vector, l0: f64, l1: f64) -> Vector {
    let beta0 = fit_source(x0, y0, l0).unwrap().beta;
    fit_transfer(x1, y1, l1, &beta0).unwrap().beta
}

/// `E_ε ‖β̂ − w1‖²_Σ1` by probing.
fn probed_risk(tp: &TaskPair, x0: &Mat, x1: &Mat, l0: f64, l1: f64) -> f64 {
    let (n0, n1) = (x0.nrows(), x1.nrows());
    let cov = tp.cov1();
    let mean = transfer_fit(x0, x1, &(x0 * tp.w0()), &(x1 * tp.w1()), l0, l1);
    let mut var0 = 0.0;
    for i in 0..n0 {
        let col = transfer_fit(x0, x1, &Vector::from_fn(n0, |k, _| (k == i) as u8 as f64), &Vector::zeros(n1), l0, l1);
        var0 += cov.norm_sq(&col);
    }
    let mut var1 = 0.0;
    for j in 0..n1 {
        let col = transfer_fit(x0, x1, &Vector::zeros(n0), &Vector::from_fn(n1, |k, _| (k == j) as u8 as f64), l0, l1);
        var1 += cov.norm_sq(&col);
    }
    let s0 = tp.sigma0() * tp.sigma0();
    let s1 = tp.sigma1() * tp.sigma1();
    cov.norm_sq(&(mean - tp.w1())) + s0 * var0 + s1 * var1
}

fn instance(p: usize, n0: usize, n1: usize, rho: f64, diag: bool) -> TaskPair {
    let (w0, w1) = signal_pair(p, 1.0, rho, 1.2).unwrap();
    let cov1 = if diag {
        Covariance::diagonal((0..p).map(|j| 0.5 + (j % 3) as f64).collect()).unwrap()
    } else {
        Covariance::identity(p)
    };
    TaskPair::new(n0, n1, 0.8, 0.6, Covariance::identity(p), cov1, w0, w1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_matches_probed_estimator(
        seed in 0u64..1_000,
        l0 in prop_oneof![Just(0.0), 0.01f64..20.0],
        l1 in prop_oneof![Just(0.0), 0.01f64..20.0],
        rho in -0.9f64..0.9,
        diag in any::<bool>(),
    ) {
        let tp = instance(12, 5, 4, rho, diag);
        let (x0, x1) = sample_designs(&tp, seed, 0);
        let terms = conditional_risk_terms(&x0, &x1, &tp, l0, l1).unwrap();
        let formula = terms.transfer_risk(tp.sigma0(), tp.sigma1());
        let probed = probed_risk(&tp, &x0, &x1, l0, l1);
        prop_assert!((formula - probed).abs() <= 1e-8 * probed.abs().max(1e-12), "{formula} vs {probed}");
    }

    #[test]
    fn target_noise_terms_cancel_exactly(seed in 0u64..1_000, l0 in 0.0f64..10.0, l1 in 0.0f64..10.0) {
        let tp = instance(10, 4, 3, 0.5, true);
        let (x0, x1) = sample_designs(&tp, seed, 1);
        let t = conditional_risk_terms(&x0, &x1, &tp, l0, l1).unwrap();
        prop_assert_eq!(t.scratch_var, t.transfer_var_target);
        let d_a = t.scratch_risk(0.0) - t.transfer_risk(tp.sigma0(), 0.0);
        let d_b = t.scratch_risk(3.0) - t.transfer_risk(tp.sigma0(), 3.0);
        prop_assert!((d_a - t.delta(tp.sigma0())).abs() <= 1e-12 * (1.0 + d_a.abs()));
        prop_assert!((d_b - t.delta(tp.sigma0())).abs() <= 1e-10 * (1.0 + t.scratch_risk(3.0)));
    }
}

#[test]
fn scratch_risk_matches_probed_scratch_fit() {
    let tp = instance(12, 5, 4, 0.3, true);
    let (x0, x1) = sample_designs(&tp, 9, 0);
    for l1 in [0.0, 0.5, 4.0] {
        let terms = conditional_risk_terms(&x0, &x1, &tp, 1.0, l1).unwrap();
        let cov = tp.cov1();
        let mean = ridge_transfer::fit_scratch(&x1, &(&x1 * tp.w1()), l1).unwrap().beta;
        let mut var = 0.0;
        for j in 0..4 {
            let e = Vector::from_fn(4, |k, _| (k == j) as u8 as f64);
            var += cov.norm_sq(&ridge_transfer::fit_scratch(&x1, &e, l1).unwrap().beta);
        }
        let probed = cov.norm_sq(&(mean - tp.w1())) + tp.sigma1().powi(2) * var;
        assert!((terms.scratch_risk(tp.sigma1()) - probed).abs() <= 1e-9 * probed);
    }
}
