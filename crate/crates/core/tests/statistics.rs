//! Monte Carlo checks of the generators, the estimator and the datasets.

use fracsde::fields::{benchmark_1d, benchmark_2d};
use fracsde::hurst::{estimate_hurst, estimate_hurst_pooled};
use fracsde::noise::{fbm_covariance, mvn_coupled_pair, CholeskyFbm, DaviesHarte, MvnConfig, SharedNoise};
use fracsde::rng::{derive_seed, rng_from_seed};
use fracsde::sde::{generate_dataset, DatasetConfig};
use fracsde::train::{train, TrainConfig};

#[test]
fn generators_agree_with_closed_form() {
    let (m, n, h) = (16, 40_000, 0.75);
    let dt = 1.0 / m as f64;
    let dh = DaviesHarte::new(h, m, dt).unwrap();
    let ch = CholeskyFbm::new(h, m, dt).unwrap();
    let mut rng_dh = rng_from_seed(1);
    let mut rng_ch = rng_from_seed(2);
    // Spot entries: diagonal, neighbours and the far corner.
    let entries = [(0, 0), (7, 7), (15, 15), (3, 4), (0, 15), (8, 12)];
    let mut acc = vec![[0.0f64; 4]; entries.len()];
    for _ in 0..n {
        let a = dh.sample(&mut rng_dh);
        let b = ch.sample(&mut rng_ch);
        for (e, &(i, j)) in entries.iter().enumerate() {
            let va = a.values[i + 1] * a.values[j + 1];
            let vb = b.values[i + 1] * b.values[j + 1];
            acc[e][0] += va;
            acc[e][1] += va * va;
            acc[e][2] += vb;
            acc[e][3] += vb * vb;
        }
    }
    let nf = n as f64;
    for (e, &(i, j)) in entries.iter().enumerate() {
        let exact = fbm_covariance(h, (i + 1) as f64 * dt, (j + 1) as f64 * dt).unwrap();
        for (s, s2) in [(acc[e][0], acc[e][1]), (acc[e][2], acc[e][3])] {
            let mean = s / nf;
            let se = ((s2 / nf - mean * mean) / nf).sqrt();
            assert!((mean - exact).abs() < 4.0 * se, "entry ({i},{j}): {mean} vs {exact}");
        }
    }
}

#[test]
fn coupled_marginals_have_fbm_variance() {
    let (m, dt, n) = (32, 1.0 / 32.0, 2000);
    let cfg = MvnConfig { refine: 4, ..MvnConfig::default() };
    let mut s = [0.0f64; 2];
    let mut s2 = [0.0f64; 2];
    for r in 0..n {
        let pair = mvn_coupled_pair(0.6, 0.85, m, dt, &cfg, derive_seed(7, "marginal", r)).unwrap();
        for (k, p) in [&pair.path_a, &pair.path_b].into_iter().enumerate() {
            let v = p.values[m].powi(2);
            s[k] += v;
            s2[k] += v * v;
        }
    }
    let nf = n as f64;
    for k in 0..2 {
        let mean = s[k] / nf;
        let se = ((s2[k] / nf - mean * mean) / nf).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "component {k}: Var B_1 = {mean}");
    }
}

#[test]
fn shared_noise_is_reusable_across_indices() {
    let noise = SharedNoise::sample(16, 0.0625, &MvnConfig { refine: 2, ..MvnConfig::default() }, 3).unwrap();
    let a = noise.fbm(0.7).unwrap();
    let b = noise.fbm(0.7).unwrap();
    assert_eq!(a, b);
    assert_eq!(noise.fbm(0.8).unwrap().values.len(), 17);
}

#[test]
fn hurst_estimator_recovers_index() {
    let m = 1000;
    for h in [0.6, 0.8] {
        let ch = CholeskyFbm::new(h, m, 1.0 / m as f64).unwrap();
        let paths: Vec<Vec<f64>> =
            (0..40).map(|r| ch.sample(&mut rng_from_seed(derive_seed(5, "h", r))).values).collect();
        let mean: f64 = paths.iter().map(|p| estimate_hurst(p).unwrap().value).sum::<f64>() / paths.len() as f64;
        assert!((mean - h).abs() < 0.05, "H = {h}: mean estimate {mean}");
        let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
        let pooled = estimate_hurst_pooled(&refs, 1).unwrap();
        assert!((pooled.value - h).abs() < 0.03, "pooled {}", pooled.value);
    }
}

#[test]
fn states_stay_inside_the_box() {
    for (field, seed) in [(Box::new(benchmark_1d()) as Box<dyn fracsde::fields::CoefficientField>, 1), (Box::new(benchmark_2d()), 2)] {
        let dataset = generate_dataset(field.as_ref(), &DatasetConfig { seed, ..DatasetConfig::default() }).unwrap();
        let mut inside = 0usize;
        let mut total = 0usize;
        for s in dataset.train.iter().chain(&dataset.val).chain(&dataset.test) {
            for x in &s.trajectory.states {
                total += 1;
                inside += (x.abs() <= 4.0) as usize;
            }
        }
        let fraction = inside as f64 / total as f64;
        assert!(fraction > 0.99, "fraction inside [-4, 4]: {fraction}");
        assert!(dataset.coverage_radius <= 4.0);
    }
}

#[test]
fn training_improves_on_initialisation() {
    let truth = benchmark_1d();
    for seed in 0..20u64 {
        let cfg = DatasetConfig { n_train: 8, n_val: 4, n_test: 1, seed, ..DatasetConfig::default() };
        let dataset = generate_dataset(&truth, &cfg).unwrap();
        let tc = TrainConfig { width: 16, max_epochs: 15, group_size: 4, seed, ..TrainConfig::default() };
        let out = train(&dataset, &tc).unwrap();
        let h = &out.history;
        let best = &h.epochs[h.best_epoch];
        assert!(best.train_loss < h.epochs[0].train_loss, "seed {seed}");
        assert!(h.best_val_loss <= h.epochs[0].val_loss);
        for p in [&out.field.drift, &out.field.diffusion] {
            assert!(p.data.iter().all(|v| v.abs() <= tc.clip));
        }
    }
}
