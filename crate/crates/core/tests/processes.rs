use std::sync::Arc;

use nalgebra::DMatrix;
use opbns::forward::sigma2_field;
use opbns::vol::{cf_y, simulate_y};
use opbns::{
    build_space, HVec, HsMat, JumpLaw, LevyDriver, LiftedDrift, ScalarTimesU, StateSemigroup, SubordinatorSpec,
    Tolerances, VolConfig, WeightSpec, WishartCp, XConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn qz() -> Vec<Vec<f64>> {
    vec![vec![0.5, 0.1, 0.0], vec![0.1, 0.4, 0.05], vec![0.0, 0.05, 0.3]]
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn projected_driver_increments_are_identically_distributed() {
    let tol = Tolerances::default();
    let w = LevyDriver::Wishart(WishartCp::new(2.0, HsMat::from_rows(&qz()).unwrap(), &tol).unwrap());
    let f = HVec::new(vec![0.3, -0.7, 0.5]).unwrap();
    let ff = opbns::hs::tensor_square(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 20_000;
    let (mut first, mut second) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let p = w.sample_path(2.0, &mut rng).unwrap();
        first.push(opbns::hs::hs_inner(&p.increment(0.0, 1.0).unwrap(), &ff).unwrap());
        second.push(opbns::hs::hs_inner(&p.increment(1.0, 2.0).unwrap(), &ff).unwrap());
    }
    // 0.1% critical value; the atom at zero only makes the test conservative
    let crit = 1.949 * (2.0 / n as f64).sqrt();
    let d = ks(first.clone(), second);
    assert!(d <= crit, "KS statistic {d} above {crit}");
    assert!(first.iter().all(|v| *v >= 0.0));
}

#[test]
fn single_and_double_precision_agree() {
    let c64 = DMatrix::from_row_slice(3, 3, &[-0.5, 0.1, 0.0, 0.05, -0.3, 0.1, 0.0, -0.1, -0.4]);
    let c32 = c64.map(|v| v as f32);
    let t64 = HsMat::from_rows(&[vec![0.4, 0.1, 0.0], vec![0.1, -0.2, 0.3], vec![0.0, 0.3, 0.1]]).unwrap();
    let t32 = HsMat::<f32>::from_matrix(t64.matrix().map(|v| v as f32)).unwrap();
    let tol32 = Tolerances::<f32>::new(1e-5, 1e-5, 1e-5, 1e-7).unwrap();
    let tol64 = Tolerances::<f64>::default();
    for (d64, d32) in [
        (LiftedDrift::lyapunov(c64.clone()).unwrap(), LiftedDrift::lyapunov(c32.clone()).unwrap()),
        (LiftedDrift::sandwich(c64.clone()).unwrap(), LiftedDrift::sandwich(c32.clone()).unwrap()),
    ] {
        let a = d64.apply_semigroup(1.3, &t64, false, &tol64).unwrap();
        let b = d32.apply_semigroup(1.3f32, &t32, false, &tol32).unwrap();
        let gap = a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| (x - *y as f64).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-5, "f32 vs f64 gap {gap}");
    }

    let y0 = HsMat::diag(&[0.3, 0.2, 0.25]);
    let cfg64 = VolConfig::new(
        y0.clone(),
        LiftedDrift::lyapunov(c64).unwrap(),
        LevyDriver::Wishart(WishartCp::new(2.0, HsMat::from_rows(&qz()).unwrap(), &tol64).unwrap()),
        tol64,
    )
    .unwrap();
    let qz32: Vec<Vec<f32>> = qz().iter().map(|r| r.iter().map(|v| *v as f32).collect()).collect();
    let cfg32 = VolConfig::new(
        HsMat::<f32>::diag(&[0.3, 0.2, 0.25]),
        LiftedDrift::lyapunov(c32).unwrap(),
        LevyDriver::Wishart(WishartCp::new(2.0f32, HsMat::from_rows(&qz32).unwrap(), &tol32).unwrap()),
        tol32,
    )
    .unwrap();
    let a = cf_y(&cfg64, 0.0, &y0, 1.0, &t64).unwrap();
    let b = cf_y(&cfg32, 0.0, &cfg32.y0, 1.0f32, &t32).unwrap();
    assert!((a.re - b.re as f64).abs() < 1e-4 && (a.im - b.im as f64).abs() < 1e-4, "{a} vs {b}");
}

#[test]
fn sigma2_is_nonnegative_on_sampled_paths() {
    let tol = Tolerances::default();
    let space = Arc::new(build_space(WeightSpec::default(), 4).unwrap());
    let sub = SubordinatorSpec::new(0.1, 2.0, JumpLaw::Exponential { mean: 0.3 }).unwrap();
    let u = HsMat::from_rows(&[
        vec![0.3, 0.1, 0.0, 0.0],
        vec![0.1, 0.3, 0.05, 0.0],
        vec![0.0, 0.05, 0.2, 0.02],
        vec![0.0, 0.0, 0.02, 0.1],
    ])
    .unwrap();
    let driver = LevyDriver::ScalarTimesU(ScalarTimesU::new(sub, u, &tol).unwrap());
    let drift = LiftedDrift::lyapunov(DMatrix::from_fn(4, 4, |i, j| if i == j { -0.6 } else { 0.1 * (i as f64 - j as f64) })).unwrap();
    let vol = VolConfig::new(HsMat::diag(&[0.1, 0.05, 0.05, 0.02]), drift, driver, tol).unwrap();
    let q = HsMat::from_rows(&[
        vec![1.0, 0.3, 0.0, 0.0],
        vec![0.3, 0.5, 0.1, 0.0],
        vec![0.0, 0.1, 0.3, 0.0],
        vec![0.0, 0.0, 0.0, 0.2],
    ])
    .unwrap();
    let cfg = XConfig::new(HVec::new(vec![3.0, 0.5, 0.2, 0.1]).unwrap(), StateSemigroup::Shift(space.clone()), q.clone(), vol).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let grid: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    for _ in 0..20 {
        let p = simulate_y(&cfg.vol, 1.0, &grid, &mut rng).unwrap();
        for (k, &s) in grid.iter().enumerate() {
            let h = p.sqrt_at(k).unwrap();
            for x in [0.0, 0.5, 2.0, 10.0] {
                assert!(sigma2_field(&space, h, &cfg.q, 1.0, s, x).unwrap() >= -1e-9);
            }
        }
    }
}
