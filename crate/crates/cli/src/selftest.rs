//! Reduced versions of the covariance and gradient oracle checks.

use fracsde::metrics::{frac_norm_with_gradient, frac_path_norm, PathDiff};
use fracsde::net::{NetParams, NeuralField};
use fracsde::noise::{fbm_covariance, CholeskyFbm, DaviesHarte, FbmPath};
use fracsde::rng::{derive_seed, rng_from_seed};
use fracsde::sde::{euler_rollout, rollout_vjp};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{CliError, CliResult, Settings};

type Check = Result<(), String>;

fn covariance_check(name: &str, hurst: f64, mut draw: impl FnMut() -> FbmPath) -> Check {
    let m = 12;
    let dt = 1.0 / m as f64;
    let n = 20_000;
    let mut sum = vec![0.0; m * m];
    let mut sum_sq = vec![0.0; m * m];
    for _ in 0..n {
        let p = draw();
        for i in 0..m {
            for j in 0..m {
                let v = p.values[i + 1] * p.values[j + 1];
                sum[i * m + j] += v;
                sum_sq[i * m + j] += v * v;
            }
        }
    }
    let nf = n as f64;
    for i in 0..m {
        for j in 0..m {
            let mean = sum[i * m + j] / nf;
            let se = ((sum_sq[i * m + j] / nf - mean * mean) / nf).sqrt();
            let exact = fbm_covariance(hurst, (i + 1) as f64 * dt, (j + 1) as f64 * dt).map_err(|e| e.to_string())?;
            // Wide band: this is a smoke test over 144 entries.
            if (mean - exact).abs() > 5.0 * se {
                return Err(format!("{name} H={hurst}: entry ({i},{j}) {mean} vs {exact} (se {se})"));
            }
        }
    }
    Ok(())
}

fn check_generators(seed: u64) -> Check {
    for (k, &h) in [0.6, 0.7, 0.9].iter().enumerate() {
        let dh = DaviesHarte::new(h, 12, 1.0 / 12.0).map_err(|e| e.to_string())?;
        let mut rng = rng_from_seed(derive_seed(seed, "selftest/dh", k as u64));
        covariance_check("circulant embedding", h, || dh.sample(&mut rng))?;
        let ch = CholeskyFbm::new(h, 12, 1.0 / 12.0).map_err(|e| e.to_string())?;
        let mut rng = rng_from_seed(derive_seed(seed, "selftest/cholesky", k as u64));
        covariance_check("cholesky", h, || ch.sample(&mut rng))?;
    }
    Ok(())
}

fn close(fd: f64, g: f64) -> bool {
    (fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()) || (fd - g).abs() < 1e-9
}

fn check_network(seed: u64) -> Check {
    let mut rng = rng_from_seed(derive_seed(seed, "selftest/net", 0));
    for _ in 0..20 {
        let d = rng.random_range(1..3usize);
        let p = NetParams::init(d + 1, rng.random_range(2..9usize), d, &mut rng);
        let t = rng.random::<f64>();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let up: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g, _) = p.vjp(t, &x, &up).map_err(|e| e.to_string())?;
        let f = |q: &NetParams| -> f64 { q.forward(t, &x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum() };
        for i in 0..p.len() {
            let h = 1e-6;
            let mut a = p.clone();
            a.data[i] += h;
            let mut b = p.clone();
            b.data[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            if !close(fd, g.data[i]) {
                return Err(format!("network parameter {i}: {fd} vs {}", g.data[i]));
            }
        }
    }
    Ok(())
}

fn path_loss(field: &NeuralField, x0: &[f64], incs: &[f64], obs: &[f64], k: usize) -> f64 {
    let tr = euler_rollout(field, x0, incs, 0.0125).unwrap();
    let coarse: Vec<f64> = tr.states.iter().step_by(k).copied().collect();
    frac_path_norm(&PathDiff::between(&coarse, obs, 1, 0.05, 0.4).unwrap())
}

fn check_end_to_end(seed: u64) -> Check {
    let mut rng = rng_from_seed(derive_seed(seed, "selftest/rollout", 0));
    let (k, steps) = (4, 12);
    for _ in 0..20 {
        let field = NeuralField::init(1, 8, 5.0, &mut rng);
        let x0 = [rng.random_range(-1.0..1.0)];
        let incs: Vec<f64> = (0..steps).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let obs: Vec<f64> = (0..=steps / k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tr = euler_rollout(&field, &x0, &incs, 0.0125).map_err(|e| e.to_string())?;
        let coarse: Vec<f64> = tr.states.iter().step_by(k).copied().collect();
        let diff = PathDiff::between(&coarse, &obs, 1, 0.05, 0.4).map_err(|e| e.to_string())?;
        let (_, g) = frac_norm_with_gradient(&diff);
        let mut upstream = vec![0.0; steps + 1];
        for (m, gm) in g.iter().enumerate() {
            upstream[m * k] = *gm;
        }
        let (gb, gs) = rollout_vjp(&field, &tr, &upstream).map_err(|e| e.to_string())?;
        let h = 1e-6;
        let mut ok = true;
        for (which, grads) in [(0, &gb), (1, &gs)] {
            for i in 0..grads.len() {
                let (mut a, mut b) = (field.clone(), field.clone());
                let (pa, pb) = if which == 0 { (&mut a.drift, &mut b.drift) } else { (&mut a.diffusion, &mut b.diffusion) };
                pa.data[i] += h;
                pb.data[i] -= h;
                let fd = (path_loss(&a, &x0, &incs, &obs, k) - path_loss(&b, &x0, &incs, &obs, k)) / (2.0 * h);
                if !close(fd, grads.data[i]) {
                    ok = false;
                }
            }
        }
        if !ok {
            return Err("end-to-end gradient disagrees with finite differences".into());
        }
    }
    Ok(())
}

pub fn run(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(&[("seed", "0")], args)?;
    let seed: u64 = s.get("seed")?;
    let checks: [(&str, fn(u64) -> Check); 3] = [
        ("fbm covariance (circulant embedding, Cholesky)", check_generators),
        ("network vector-Jacobian product", check_network),
        ("path loss through rollout adjoint", check_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
