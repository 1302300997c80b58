use proptest::prelude::*;
use ridge_transfer::stats::RunningStats;
use ridge_transfer::task::{sample_design, sample_designs};
use ridge_transfer::{make_isotropic_pair, PairSpec, TaskPair};

fn pair(n0: usize, n1: usize, sigma0: f64) -> TaskPair {
    make_isotropic_pair(&PairSpec {
        p: 20,
        n0,
        n1,
        w0_norm: 1.0,
        rho: 0.4,
        w1_norm: 1.0,
        sigma0,
        sigma1: 0.3,
    })
    .unwrap()
}

#[test]
fn source_and_target_designs_are_uncorrelated() {
    let tp = pair(5, 5, 0.5);
    let reps = 4000u64;
    let bound = 3.0 / (reps as f64).sqrt();
    for (a, b) in [((0, 0), (0, 0)), ((1, 3), (4, 3)), ((2, 7), (2, 8))] {
        let mut sx = RunningStats::new();
        let mut sy = RunningStats::new();
        let mut sxy = RunningStats::new();
        for r in 0..reps {
            let (x0, x1) = sample_designs(&tp, 2, r);
            let (u, v) = (x0[a], x1[b]);
            sx.push(u);
            sy.push(v);
            sxy.push(u * v);
        }
        let cov = sxy.mean() - sx.mean() * sy.mean();
        let corr = cov / (sx.variance() * sy.variance()).sqrt();
        assert!(corr.abs() < bound, "corr {corr} at {a:?} {b:?}");
    }
}

#[test]
fn label_noise_has_configured_variance() {
    let sigma0 = 0.7;
    let tp = pair(18, 4, sigma0);
    let mut s = RunningStats::new();
    for r in 0..1000u64 {
        let d = sample_design(&tp, 8, r);
        for e in (&d.y0 - &d.x0 * tp.w0()).iter() {
            s.push(*e);
        }
    }
    assert!(s.count() >= 10_000);
    assert!((s.variance() / (sigma0 * sigma0) - 1.0).abs() < 0.05);
}

proptest! {
    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), replicate in any::<u64>()) {
        let tp = pair(4, 3, 0.5);
        let a = sample_design(&tp, seed, replicate);
        let b = sample_design(&tp, seed, replicate);
        prop_assert_eq!(a, b);
    }
}
