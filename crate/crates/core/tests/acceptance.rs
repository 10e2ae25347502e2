//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use fracsde::experiments::{
    fitting_sweep, loglog_slope, spearman, time_sweep, width_sweep, FittingSweepConfig, SweepRow, TimeSweepConfig,
    WidthSweepConfig, DEFAULT_TIME_STEPS,
};
use fracsde::fields::benchmark_1d;
use fracsde::hurst::estimate_hurst;
use fracsde::metrics::{frac_norm_subgradient, frac_path_norm, holder_diff_seminorm, PathDiff};
use fracsde::net::NeuralField;
use fracsde::noise::{
    cross_increment_variance, fbm_covariance, mvn_coupled_pair, CholeskyFbm, DaviesHarte, FbmPath, MvnConfig,
};
use fracsde::rng::{derive_seed, rng_from_seed};
use fracsde::sde::{euler_rollout, generate_dataset, rollout_vjp, DatasetConfig};
use fracsde::train::{evaluate, train, EvalConfig, NoiseMode, TrainConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Entrywise mean and standard error of `B_{t_i} B_{t_j}` over `n` paths.
fn empirical_covariance(m: usize, n: usize, draw: impl Fn(u64) -> FbmPath + Sync) -> (Vec<f64>, Vec<f64>) {
    let chunks = 100;
    let per = n / chunks;
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; m * m];
            let mut s2 = vec![0.0; m * m];
            for r in 0..per {
                let p = draw((c * per + r) as u64);
                for i in 0..m {
                    for j in 0..m {
                        let v = p.values[i + 1] * p.values[j + 1];
                        s[i * m + j] += v;
                        s2[i * m + j] += v * v;
                    }
                }
            }
            (s, s2)
        })
        .reduce(
            || (vec![0.0; m * m], vec![0.0; m * m]),
            |mut a, b| {
                for k in 0..m * m {
                    a.0[k] += b.0[k];
                    a.1[k] += b.1[k];
                }
                a
            },
        );
    let nf = (per * chunks) as f64;
    let mean: Vec<f64> = sums.0.iter().map(|s| s / nf).collect();
    let se = sums.1.iter().zip(&mean).map(|(s2, mu)| ((s2 / nf - mu * mu) / nf).sqrt()).collect();
    (mean, se)
}

fn criterion_fbm_covariance() -> Outcome {
    let (m, n) = (32, 100_000);
    let dt = 1.0 / m as f64;
    let mut worst: f64 = 0.0;
    // Exceedances against the closed form (circulant, Cholesky) and between
    // generators. Agreement of the two generators means both lie within the
    // band around the closed form; the direct comparison is reported only.
    let mut failures = [0usize; 3];
    for (k, &h) in [0.6, 0.7, 0.9].iter().enumerate() {
        let dh = DaviesHarte::new(h, m, dt).unwrap();
        let ch = CholeskyFbm::new(h, m, dt).unwrap();
        let (dh_mean, dh_se) =
            empirical_covariance(m, n, |r| dh.sample(&mut rng_from_seed(derive_seed(SEED, "dh", k as u64 * n as u64 + r))));
        let (ch_mean, ch_se) = empirical_covariance(m, n, |r| {
            ch.sample(&mut rng_from_seed(derive_seed(SEED, "cholesky", k as u64 * n as u64 + r)))
        });
        for i in 0..m {
            for j in 0..m {
                let e = i * m + j;
                let exact = fbm_covariance(h, (i + 1) as f64 * dt, (j + 1) as f64 * dt).unwrap();
                let z_dh = (dh_mean[e] - exact).abs() / dh_se[e];
                let z_ch = (ch_mean[e] - exact).abs() / ch_se[e];
                let z_pair = (dh_mean[e] - ch_mean[e]).abs() / (dh_se[e].powi(2) + ch_se[e].powi(2)).sqrt();
                for (f, z) in failures.iter_mut().zip([z_dh, z_ch, z_pair]) {
                    worst = worst.max(z);
                    *f += (z > 3.0) as usize;
                }
            }
        }
    }
    let [dh, ch, pair] = failures;
    outcome(
        dh == 0 && ch == 0,
        format!(
            "entries beyond 3 SE of {}: circulant {dh}, Cholesky {ch}; direct generator difference {pair}, worst z = {worst:.2}",
            3 * m * m
        ),
    )
}

fn criterion_coupling() -> Outcome {
    let (h1, h2, m) = (0.7, 0.75, 64);
    let dt = 1.0 / m as f64;
    let lag = m / 2;
    // The closed form is for the untruncated kernel; a long memory horizon
    // keeps the truncated tail well inside the tolerance.
    let config = MvnConfig { horizon_factor: 400.0, refine: 1, ..MvnConfig::default() };
    let n = 10_000;
    let sq: f64 = (0..n)
        .into_par_iter()
        .map(|r| {
            let pair = mvn_coupled_pair(h1, h2, m, dt, &config, derive_seed(SEED, "coupled", r as u64)).unwrap();
            let (a, b) = (&pair.path_a.values, &pair.path_b.values);
            (0..=m - lag).map(|s| ((a[s + lag] - a[s]) - (b[s + lag] - b[s])).powi(2)).sum::<f64>()
                / (m - lag + 1) as f64
        })
        .sum();
    let empirical = sq / n as f64;
    let exact = cross_increment_variance(h1, h2, lag as f64 * dt).unwrap();
    let rel = (empirical - exact).abs() / exact;

    let deltas = [0.01, 0.04, 0.16];
    let alpha = 0.4;
    let mut medians = Vec::new();
    for (k, &d) in deltas.iter().enumerate() {
        let mut v: Vec<f64> = (0..200)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(SEED, "seminorm", (k * 200 + r) as u64);
                let pair = mvn_coupled_pair(0.7, 0.7 + d, m, dt, &config, seed).unwrap();
                holder_diff_seminorm(&pair.path_a, &pair.path_b, alpha).unwrap()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        medians.push(0.5 * (v[99] + v[100]));
    }
    let slope = loglog_slope(&deltas, &medians).unwrap();
    let pass = rel <= 0.10 && (0.3..=0.7).contains(&slope);
    outcome(
        pass,
        format!(
            "cross variance {empirical:.4e} vs {exact:.4e} (rel {rel:.3}); seminorm medians {:?}, slope {slope:.3}",
            medians.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_hurst() -> Outcome {
    let (h, m) = (0.7, 2000);
    let ch = CholeskyFbm::new(h, m, 1.0 / m as f64).unwrap();
    let errors: Vec<f64> = (0..200)
        .into_par_iter()
        .map(|r| {
            let path = ch.sample(&mut rng_from_seed(derive_seed(SEED, "hurst", r)));
            (estimate_hurst(&path.values).unwrap().value - h).abs()
        })
        .collect();
    let mean_err = errors.iter().sum::<f64>() / errors.len() as f64;
    let quad: Vec<f64> = (0..=4000).map(|i| (i as f64 / 4000.0).powi(2)).collect();
    let q = estimate_hurst(&quad).unwrap().value;
    outcome(mean_err <= 0.05 && q == 0.99, format!("mean |H^ - H| = {mean_err:.4}; quadratic series -> {q}"))
}

fn path_loss(field: &NeuralField, x0: &[f64], incs: &[f64], obs: &[f64], k: usize, dt: f64, alpha: f64) -> f64 {
    let tr = euler_rollout(field, x0, incs, dt).unwrap();
    let coarse: Vec<f64> = tr.states.iter().step_by(k).copied().collect();
    frac_path_norm(&PathDiff::between(&coarse, obs, 1, k as f64 * dt, alpha).unwrap())
}

fn criterion_gradient() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(SEED, "gradient", 0));
    let (k, steps, dt, alpha) = (4, 12, 0.0125, 0.4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let field = NeuralField::init(1, 8, 5.0, &mut rng);
        let x0 = [rng.random_range(-1.0..1.0)];
        let incs: Vec<f64> = (0..steps).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let obs: Vec<f64> = (0..=steps / k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tr = euler_rollout(&field, &x0, &incs, dt).unwrap();
        let coarse: Vec<f64> = tr.states.iter().step_by(k).copied().collect();
        let g = frac_norm_subgradient(&PathDiff::between(&coarse, &obs, 1, k as f64 * dt, alpha).unwrap());
        let mut upstream = vec![0.0; steps + 1];
        for (m, gm) in g.iter().enumerate() {
            upstream[m * k] = *gm;
        }
        let (gb, gs) = rollout_vjp(&field, &tr, &upstream).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (which, grads) in [(0, &gb), (1, &gs)] {
            for i in 0..grads.len() {
                let h = 1e-6;
                let (mut a, mut b) = (field.clone(), field.clone());
                let (pa, pb) = if which == 0 { (&mut a.drift, &mut b.drift) } else { (&mut a.diffusion, &mut b.diffusion) };
                pa.data[i] += h;
                pb.data[i] -= h;
                let fd = (path_loss(&a, &x0, &incs, &obs, k, dt, alpha) - path_loss(&b, &x0, &incs, &obs, k, dt, alpha))
                    / (2.0 * h);
                num += (fd - grads.data[i]).powi(2);
                den += fd * fd;
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    outcome(worst <= 1e-4, format!("worst relative error {worst:.2e} over 20 configurations"))
}

fn training_config(seed: u64) -> TrainConfig {
    TrainConfig { width: 128, group_size: 5, patience: 60, max_epochs: 1000, seed, ..TrainConfig::default() }
}

fn criterion_training() -> Outcome {
    let truth = benchmark_1d();
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let dataset = generate_dataset(&truth, &DatasetConfig { seed, ..DatasetConfig::default() }).unwrap();
        let out = train(&dataset, &training_config(seed)).unwrap();
        let report = evaluate(&out.field, &truth, &dataset, &EvalConfig::from_outcome(&out, NoiseMode::Oracle, seed)).unwrap();
        let ok = report.loss_mean <= 0.08 && report.recovery.l2_drift <= 0.05 && report.recovery.l2_diffusion <= 0.01;
        passed += ok as usize;
        lines.push(format!(
            "seed {seed}: loss {:.4} L2(b) {:.4} L2(s) {:.4}",
            report.loss_mean, report.recovery.l2_drift, report.recovery.l2_diffusion
        ));
    }
    outcome(passed >= 3, format!("{passed}/5 seeds within bounds [{}]", lines.join("; ")))
}

fn monotone_within_std(rows: &[SweepRow]) -> bool {
    let inversions: Vec<usize> = (1..rows.len()).filter(|&i| rows[i].mean >= rows[i - 1].mean).collect();
    match inversions.as_slice() {
        [] => true,
        [i] => rows[*i].mean - rows[*i - 1].mean <= rows[*i].std.max(rows[*i - 1].std),
        _ => false,
    }
}

fn criterion_width() -> Outcome {
    let config = WidthSweepConfig {
        train: TrainConfig { group_size: 5, patience: 60, max_epochs: 1000, ..TrainConfig::default() },
        replicas: 2,
        seed: SEED,
        ..WidthSweepConfig::default()
    };
    let table = width_sweep(&[8, 32, 128], &config, |_| Ok(())).unwrap();
    let pass = table.slope <= -0.4 && monotone_within_std(&table.rows);
    let means: Vec<String> = table.rows.iter().map(|r| format!("{:.4}±{:.4}", r.mean, r.std)).collect();
    outcome(pass, format!("means {means:?}, slope {:.3}", table.slope))
}

fn criterion_fitting() -> Outcome {
    let ms = [250, 500, 1000, 2000, 4000];
    let config = FittingSweepConfig { seed: SEED, ..FittingSweepConfig::default() };
    let table = fitting_sweep(&ms, &config, |_| Ok(())).unwrap();
    let rho = spearman(&table.controls(), &table.means()).unwrap();
    let control = fitting_sweep(&ms, &FittingSweepConfig { true_hurst: true, replicas: 20, ..config }, |_| Ok(())).unwrap();
    let control_max = control.means().into_iter().fold(0.0, f64::max);
    let means: Vec<String> = table.means().iter().map(|m| format!("{m:.4}")).collect();
    outcome(
        rho < 0.0 && control_max <= 1e-12,
        format!("means {means:?}, spearman {rho:.2}, control max {control_max:.1e}"),
    )
}

fn criterion_time() -> Outcome {
    let config = TimeSweepConfig { seed: SEED, ..TimeSweepConfig::default() };
    let table = time_sweep(&DEFAULT_TIME_STEPS, &config, |_| Ok(())).unwrap();
    let control = time_sweep(&DEFAULT_TIME_STEPS, &TimeSweepConfig { zero_diffusion: true, ..config }, |_| Ok(())).unwrap();
    let pass = (0.25..=0.70).contains(&table.slope) && (control.slope - 1.0).abs() <= 0.1;
    outcome(pass, format!("slope {:.3} (reference 0.4), zero-diffusion slope {:.3}", table.slope, control.slope))
}

fn main() -> ExitCode {
    // Honour a name filter so `cargo test <other>` skips this target.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 fbm covariance", criterion_fbm_covariance),
        ("2 coupled-path oracle", criterion_coupling),
        ("3 hurst estimator", criterion_hurst),
        ("4 gradient exactness", criterion_gradient),
        ("5 training accuracy", criterion_training),
        ("6 width sweep", criterion_width),
        ("7 fitting sweep", criterion_fitting),
        ("8 time sweep", criterion_time),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!("criterion {name}: {status} ({:.1}s) {}", start.elapsed().as_secs_f64(), o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
