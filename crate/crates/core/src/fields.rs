//! Drift and diffusion coefficients.
//!
//! Diffusion is always diagonal and represented by its diagonal vector.

use std::f64::consts::PI;
use std::sync::Arc;

pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes `b(t, x)` into `out`.
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Writes the diagonal of `σ(t, x)` into `out`.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn drift_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift(t, x, &mut out);
        out
    }

    fn diffusion_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.diffusion(t, x, &mut out);
        out
    }
}

impl<F: CoefficientField + ?Sized> CoefficientField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).drift(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).diffusion(t, x, out)
    }
}

impl<F: CoefficientField + ?Sized> CoefficientField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).drift(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).diffusion(t, x, out)
    }
}

/// `b(t, x) = -x + tanh(x) / 4`, `σ(t, x) = 0.5 + 0.2 tanh(x)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Benchmark1d;

impl CoefficientField for Benchmark1d {
    fn dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -x[0] + 0.25 * x[0].tanh();
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 0.5 + 0.2 * x[0].tanh();
    }
}

/// Linear mean reversion with a periodic forcing, diagonal tanh diffusion.
#[derive(Debug, Clone, Copy, Default)]
pub struct Benchmark2d;

impl CoefficientField for Benchmark2d {
    fn dim(&self) -> usize {
        2
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let phase = 2.0 * PI * t;
        out[0] = -0.8 * x[0] + 0.25 * phase.sin();
        out[1] = -0.4 * x[1] + 0.2 * phase.cos();
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 0.6 + 0.15 * x[0].tanh();
        out[1] = 0.6 + 0.15 * x[1].tanh();
    }
}

pub fn benchmark_1d() -> Benchmark1d {
    Benchmark1d
}

pub fn benchmark_2d() -> Benchmark2d {
    Benchmark2d
}

/// Looks up a benchmark by name (`"1d"` or `"2d"`).
pub fn benchmark_by_name(name: &str) -> Option<Box<dyn CoefficientField>> {
    match name {
        "1d" => Some(Box::new(Benchmark1d)),
        "2d" => Some(Box::new(Benchmark2d)),
        _ => None,
    }
}

type CoefFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Field assembled from closures.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    drift: CoefFn,
    diffusion: CoefFn,
}

impl FnField {
    pub fn new<B, S>(dim: usize, drift: B, diffusion: S) -> Self
    where
        B: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        FnField { dim, drift: Arc::new(drift), diffusion: Arc::new(diffusion) }
    }
}

impl std::fmt::Debug for FnField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnField").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl CoefficientField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
}

/// Keeps the drift of `inner` and switches the noise off.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDiffusion<F>(pub F);

impl<F: CoefficientField> CoefficientField for ZeroDiffusion<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.0.drift(t, x, out)
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::rng_from_seed;

    #[test]
    fn benchmark_1d_values() {
        let f = benchmark_1d();
        assert_eq!(f.drift_vec(0.3, &[0.0]), vec![0.0]);
        assert_eq!(f.diffusion_vec(0.3, &[0.0]), vec![0.5]);
        let b = f.drift_vec(0.0, &[1.0])[0];
        assert!((b - (-1.0 + 0.25 * 1f64.tanh())).abs() < 1e-15);
        assert!((b + 0.80960).abs() < 1e-5);
    }

    #[test]
    fn benchmark_2d_values() {
        let f = benchmark_2d();
        let b0 = f.drift_vec(0.0, &[0.0, 0.0]);
        assert_eq!(b0, vec![0.0, 0.2]);
        assert_eq!(f.diffusion_vec(0.7, &[0.0, 0.0]), vec![0.6, 0.6]);
        let b = f.drift_vec(0.25, &[0.0, 0.0]);
        assert!((b[0] - 0.25).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn diffusion_bounds() {
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let t = rng.random::<f64>();
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let s = benchmark_1d().diffusion_vec(t, &x[..1])[0];
            assert!((0.3..=0.7).contains(&s));
            for s in benchmark_2d().diffusion_vec(t, &x) {
                assert!((0.45..=0.75).contains(&s));
            }
        }
    }

    #[test]
    fn drift_lipschitz_bound() {
        let f = benchmark_1d();
        let mut rng = rng_from_seed(2);
        let h = 1e-6;
        for _ in 0..10_000 {
            let x = rng.random_range(-5.0..5.0);
            let d = (f.drift_vec(0.0, &[x + h])[0] - f.drift_vec(0.0, &[x - h])[0]) / (2.0 * h);
            assert!(d.abs() <= 1.25 + 1e-6);
        }
    }

    #[test]
    fn zero_diffusion_wrapper() {
        let f = ZeroDiffusion(benchmark_1d());
        assert_eq!(f.diffusion_vec(0.0, &[1.0]), vec![0.0]);
        assert_eq!(f.drift_vec(0.0, &[1.0]), benchmark_1d().drift_vec(0.0, &[1.0]));
    }
}
