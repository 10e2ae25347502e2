//! Fractional path norms, their subgradients and coefficient-recovery errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fields::CoefficientField;
use crate::noise::FbmPath;
use crate::rng::rng_from_seed;

pub const DEFAULT_EVAL_POINTS: usize = 4096;

/// Difference `X̂_{t_m} - X_{t_m}` on a coarse grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDiff {
    pub dim: usize,
    pub coarse_dt: f64,
    pub alpha: f64,
    pub values: Vec<f64>,
}

impl PathDiff {
    pub fn new(values: Vec<f64>, dim: usize, coarse_dt: f64, alpha: f64) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not form points of dimension {dim}", values.len())));
        }
        if !(coarse_dt > 0.0) {
            return Err(domain(format!("coarse step must be positive, got {coarse_dt}")));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(domain(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        Ok(PathDiff { dim, coarse_dt, alpha, values })
    }

    /// Pointwise difference of two row-major paths.
    pub fn between(estimate: &[f64], truth: &[f64], dim: usize, coarse_dt: f64, alpha: f64) -> Result<Self> {
        if estimate.len() != truth.len() {
            return Err(Error::Shape(format!("paths have {} and {} values", estimate.len(), truth.len())));
        }
        let values = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
        PathDiff::new(values, dim, coarse_dt, alpha)
    }

    pub fn points(&self) -> usize {
        self.values.len() / self.dim
    }

    fn point(&self, m: usize) -> &[f64] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    fn weights(&self) -> Vec<f64> {
        // Δ̂ / (j Δ̂)^{α+1} for lag j.
        let h = self.coarse_dt;
        (0..self.points()).map(|j| if j == 0 { 0.0 } else { h / (j as f64 * h).powf(self.alpha + 1.0) }).collect()
    }

    fn inner(&self, m: usize, weights: &[f64]) -> f64 {
        let fm = self.point(m);
        let mut acc = norm(fm);
        for k in 0..m {
            acc += weights[m - k] * dist(fm, self.point(k));
        }
        acc
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max_m ‖f_m‖ + Σ_{k<m} ‖f_m - f_k‖ Δ̂ / ((m-k) Δ̂)^{α+1}`.
pub fn frac_path_norm(diff: &PathDiff) -> f64 {
    let w = diff.weights();
    (0..diff.points()).map(|m| diff.inner(m, &w)).fold(0.0, f64::max)
}

/// Norm and its subgradient with respect to every `f_m` (row-major).
///
/// The derivative is taken through the first maximising index, with
/// `∇‖v‖ = v / ‖v‖` and `0` at `v = 0`.
pub fn frac_norm_with_gradient(diff: &PathDiff) -> (f64, Vec<f64>) {
    let w = diff.weights();
    let mut best = 0;
    let mut value = f64::NEG_INFINITY;
    for m in 0..diff.points() {
        let v = diff.inner(m, &w);
        if v > value {
            value = v;
            best = m;
        }
    }
    let d = diff.dim;
    let mut grad = vec![0.0; diff.values.len()];
    let fm = diff.point(best);
    let n = norm(fm);
    if n > 0.0 {
        for c in 0..d {
            grad[best * d + c] += fm[c] / n;
        }
    }
    for k in 0..best {
        let fk = diff.point(k);
        let r = dist(fm, fk);
        if r > 0.0 {
            let s = w[best - k] / r;
            for c in 0..d {
                let g = s * (fm[c] - fk[c]);
                grad[best * d + c] += g;
                grad[k * d + c] -= g;
            }
        }
    }
    (value, grad)
}

pub fn frac_norm_subgradient(diff: &PathDiff) -> Vec<f64> {
    frac_norm_with_gradient(diff).1
}

/// Mean fractional norm over trajectories.
pub fn batch_loss(diffs: &[PathDiff]) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    Ok(diffs.iter().map(frac_path_norm).sum::<f64>() / diffs.len() as f64)
}

/// Sample mean and (n-1)-normalised standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

/// `count` points uniform on `[0, horizon] × [-radius, radius]^dim`.
pub fn uniform_eval_points(dim: usize, horizon: f64, radius: f64, count: usize, seed: u64) -> Vec<EvalPoint> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let t = horizon * rng.random::<f64>();
            let x = (0..dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            EvalPoint { t, x }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub l2_drift: f64,
    pub l2_diffusion: f64,
    pub rel_drift: f64,
    pub rel_diffusion: f64,
    pub n_eval: usize,
    /// Points left out of `rel_drift` because the true drift vanishes there.
    pub excluded_drift: usize,
    /// Points left out of `rel_diffusion` for the same reason.
    pub excluded_diffusion: usize,
}

/// Root-mean-square absolute and relative coefficient errors on `points`.
pub fn recovery_metrics<E, T>(estimate: &E, truth: &T, points: &[EvalPoint]) -> Result<RecoveryReport>
where
    E: CoefficientField + ?Sized,
    T: CoefficientField + ?Sized,
{
    let d = truth.dim();
    if estimate.dim() != d {
        return Err(Error::Shape(format!("fields have dimensions {} and {d}", estimate.dim())));
    }
    if points.is_empty() {
        return Err(Error::Degenerate("no evaluation points".into()));
    }
    let mut be = vec![0.0; d];
    let mut bt = vec![0.0; d];
    let mut se = vec![0.0; d];
    let mut st = vec![0.0; d];
    let (mut ab, mut asg, mut rb, mut rs) = (0.0, 0.0, 0.0, 0.0);
    let (mut nb, mut ns) = (0usize, 0usize);
    for p in points {
        if p.x.len() != d {
            return Err(Error::Shape(format!("evaluation point of dimension {}, expected {d}", p.x.len())));
        }
        estimate.drift(p.t, &p.x, &mut be);
        truth.drift(p.t, &p.x, &mut bt);
        estimate.diffusion(p.t, &p.x, &mut se);
        truth.diffusion(p.t, &p.x, &mut st);
        let eb = dist(&be, &bt);
        let es = dist(&se, &st);
        ab += eb * eb;
        asg += es * es;
        let tb = norm(&bt);
        if tb > 0.0 {
            rb += (eb / tb).powi(2);
            nb += 1;
        }
        let ts = norm(&st);
        if ts > 0.0 {
            rs += (es / ts).powi(2);
            ns += 1;
        }
    }
    let n = points.len();
    let rms = |sum: f64, count: usize| if count == 0 { 0.0 } else { (sum / count as f64).sqrt() };
    let report = RecoveryReport {
        l2_drift: rms(ab, n),
        l2_diffusion: rms(asg, n),
        rel_drift: rms(rb, nb),
        rel_diffusion: rms(rs, ns),
        n_eval: n,
        excluded_drift: n - nb,
        excluded_diffusion: n - ns,
    };
    if [report.l2_drift, report.l2_diffusion, report.rel_drift, report.rel_diffusion]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(Error::Degenerate("recovery metrics are not finite".into()));
    }
    Ok(report)
}

/// Discrete `‖g‖_{1,1-α}` of `g = a - b` on the common grid:
/// `max_{s<t} |g_t - g_s| / (t-s)^{1-α} + Σ_{s<r<t} |g_t - g_r| / (t-r)^{2-α} dt`.
pub fn holder_diff_seminorm(a: &FbmPath, b: &FbmPath, alpha: f64) -> Result<f64> {
    if a.values.len() != b.values.len() || (a.dt - b.dt).abs() > 1e-15 * a.dt.abs().max(1.0) {
        return Err(Error::Shape("paths live on different grids".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let g: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let dt = a.dt;
    let n = g.len();
    let outer: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { (j as f64 * dt).powf(alpha - 1.0) }).collect();
    let inner: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { dt * (j as f64 * dt).powf(alpha - 2.0) }).collect();
    let mut best: f64 = 0.0;
    for t in 1..n {
        // Running Σ_{s<r<t}, extended by one r as s moves left.
        let mut tail = 0.0;
        for s in (0..t).rev() {
            if s + 1 < t {
                let r = s + 1;
                tail += (g[t] - g[r]).abs() * inner[t - r];
            }
            best = best.max((g[t] - g[s]).abs() * outer[t - s] + tail);
        }
    }
    Ok(best)
}
