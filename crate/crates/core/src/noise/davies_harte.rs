use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{check_hurst, FbmPath};
use crate::error::{domain, Error, Result};
use crate::rng::rng_from_seed;

/// Autocovariance of fractional Gaussian noise with step `dt` at lag `k`.
pub fn fgn_autocovariance(h: f64, dt: f64, k: usize) -> f64 {
    let two_h = 2.0 * h;
    let k = k as f64;
    0.5 * dt.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Circulant-embedding sampler for `m` fGn increments.
///
/// The embedding has size `2m`. Its eigenvalues are computed once; each
/// sample costs one FFT of length `2m`.
pub struct DaviesHarte {
    hurst: f64,
    dt: f64,
    m: usize,
    /// `sqrt(λ_j / 2m)`.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DaviesHarte {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DaviesHarte")
            .field("hurst", &self.hurst)
            .field("dt", &self.dt)
            .field("m", &self.m)
            .finish()
    }
}

impl DaviesHarte {
    pub fn new(hurst: f64, m: usize, dt: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if m == 0 {
            return Err(domain("need at least one step"));
        }
        if !(dt > 0.0) {
            return Err(domain(format!("step size must be positive, got {dt}")));
        }
        let n = 2 * m;
        let mut row: Vec<Complex<f64>> = (0..n)
            .map(|j| {
                let lag = if j <= m { j } else { n - j };
                Complex::new(fgn_autocovariance(hurst, dt, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        fft.process(&mut row);

        // Eigenvalues of a symmetric circulant are real. Entries within
        // round-off of zero are treated as zero; anything below that is a
        // genuine failure of the embedding.
        let max = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * max;
        let mut scale = Vec::with_capacity(n);
        for (index, c) in row.iter().enumerate() {
            let value = c.re;
            if value < -tol {
                return Err(Error::NegativeEigenvalue { index, value });
            }
            scale.push((value.max(0.0) / n as f64).sqrt());
        }
        Ok(DaviesHarte { hurst, dt, m, scale, fft })
    }

    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Draws `m` increments.
    pub fn sample_increments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.m;
        let n = 2 * m;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        buf[0] = Complex::new(self.scale[0] * normal(), 0.0);
        buf[m] = Complex::new(self.scale[m] * normal(), 0.0);
        for j in 1..m {
            let s = self.scale[j] * std::f64::consts::FRAC_1_SQRT_2;
            let z = Complex::new(s * normal(), s * normal());
            buf[j] = z;
            buf[n - j] = z.conj();
        }
        self.fft.process(&mut buf);
        buf[..m].iter().map(|c| c.re).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        FbmPath::from_increments(self.hurst, self.dt, &self.sample_increments(rng))
    }
}

/// Exact fBm path with `m` steps of size `dt`.
pub fn fbm_davies_harte(hurst: f64, m: usize, dt: f64, seed: u64) -> Result<FbmPath> {
    let gen = DaviesHarte::new(hurst, m, dt)?;
    Ok(gen.sample(&mut rng_from_seed(seed)))
}
