use fracsde::fields::{benchmark_1d, CoefficientField};
use fracsde::hurst::estimate_hurst;
use fracsde::metrics::{batch_loss, recovery_metrics, uniform_eval_points, PathDiff};
use fracsde::net::{NetParams, NeuralField};
use fracsde::noise::{cross_factor, cross_increment_variance, fbm_covariance, fbm_davies_harte};
use fracsde::rng::rng_from_seed;
use fracsde::sde::euler_rollout;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_symmetric_with_power_diagonal(h in 0.01f64..0.99, t in 0.0f64..5.0, s in 0.0f64..5.0) {
        let a = fbm_covariance(h, t, s).unwrap();
        let b = fbm_covariance(h, s, t).unwrap();
        prop_assert_eq!(a, b);
        let d = fbm_covariance(h, t, t).unwrap();
        prop_assert!((d - t.powf(2.0 * h)).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn cross_factor_in_unit_interval(h1 in 0.501f64..0.999, h2 in 0.501f64..0.999) {
        let f = cross_factor(h1, h2).unwrap();
        prop_assert!(f > 0.0 && f <= 1.0 + 1e-12, "f = {}", f);
    }

    #[test]
    fn cross_variance_non_negative(h1 in 0.501f64..0.999, dh in 0.005f64..0.3, v in 0.01f64..3.0) {
        let h2 = (h1 + dh).min(0.999);
        prop_assume!(h2 > h1);
        prop_assert!(cross_increment_variance(h1, h2, v).unwrap() > 0.0);
    }

    #[test]
    fn davies_harte_anchored_and_reproducible(h in 0.05f64..0.95, m in 1usize..64, seed in any::<u64>()) {
        let a = fbm_davies_harte(h, m, 0.1, seed).unwrap();
        prop_assert_eq!(a.values.len(), m + 1);
        prop_assert_eq!(a.values[0], 0.0);
        prop_assert_eq!(a, fbm_davies_harte(h, m, 0.1, seed).unwrap());
    }

    #[test]
    fn hurst_estimate_in_range(seed in any::<u64>(), n in 9usize..200) {
        let mut rng = rng_from_seed(seed);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = estimate_hurst(&s) {
            prop_assert!(e.value > 0.5 && e.value <= 0.99);
        }
    }

    #[test]
    fn batch_loss_permutation_invariant(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = rng_from_seed(seed);
        let diffs: Vec<PathDiff> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
                PathDiff::new(v, 1, 0.05, 0.4).unwrap()
            })
            .collect();
        let mut rev = diffs.clone();
        rev.reverse();
        let a = batch_loss(&diffs).unwrap();
        let b = batch_loss(&rev).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn rollout_reproducible(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let field = NeuralField::init(2, 6, 5.0, &mut rng);
        let incs: Vec<f64> = (0..40).map(|_| rng.random_range(-0.1..0.1)).collect();
        let a = euler_rollout(&field, &[0.3, -0.2], &incs, 0.0125).unwrap();
        let b = euler_rollout(&field, &[0.3, -0.2], &incs, 0.0125).unwrap();
        prop_assert_eq!(a.states, b.states);
    }
}

#[test]
fn network_vjp_matches_finite_differences() {
    let mut rng = rng_from_seed(99);
    for _ in 0..100 {
        let d = rng.random_range(1..4usize);
        let p = NetParams::init(d + 1, rng.random_range(1..12usize), d, &mut rng);
        let t = rng.random::<f64>();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let up: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g, _) = p.vjp(t, &x, &up).unwrap();
        let f = |q: &NetParams| -> f64 { q.forward(t, &x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum() };
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..p.len() {
            let h = 1e-6;
            let (mut a, mut b) = (p.clone(), p.clone());
            a.data[i] += h;
            b.data[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            num += (fd - g.data[i]).powi(2);
            den += fd * fd;
        }
        assert!((num / den.max(1e-300)).sqrt() < 1e-4);
    }
}

#[test]
fn recovery_zero_only_for_equal_fields() {
    let truth = benchmark_1d();
    let points = uniform_eval_points(1, 1.0, 4.0, 512, 3);
    let same = recovery_metrics(&truth, &truth, &points).unwrap();
    assert_eq!((same.l2_drift, same.l2_diffusion), (0.0, 0.0));
    let nudged = fracsde::fields::FnField::new(
        1,
        move |t, x: &[f64], out: &mut [f64]| {
            benchmark_1d().drift(t, x, out);
            if x[0] > 3.9 {
                out[0] += 1.0;
            }
        },
        |t, x: &[f64], out: &mut [f64]| benchmark_1d().diffusion(t, x, out),
    );
    let r = recovery_metrics(&nudged, &truth, &points).unwrap();
    assert!(r.l2_drift > 0.0);
    assert_eq!(r.l2_diffusion, 0.0);
}
