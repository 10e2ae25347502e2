use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{check_hurst, check_hurst_coupled, mvn_constant, CoupledPair, FbmPath};
use crate::error::{domain, Result};
use crate::rng::rng_from_seed;

/// Discretisation of the Mandelbrot–van Ness integral.
///
/// The white noise lives on cells of width `dt / refine` covering
/// `[-horizon_factor * m * dt, m * dt]`; the kernel is averaged exactly over
/// each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnConfig {
    pub horizon_factor: f64,
    pub refine: usize,
    pub min_horizon_factor: f64,
    pub min_refine: usize,
}

impl Default for MvnConfig {
    fn default() -> Self {
        MvnConfig { horizon_factor: 50.0, refine: 8, min_horizon_factor: 1.0, min_refine: 1 }
    }
}

impl MvnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_factor >= self.min_horizon_factor) {
            return Err(domain(format!(
                "truncation horizon factor {} below floor {}",
                self.horizon_factor, self.min_horizon_factor
            )));
        }
        if self.refine < self.min_refine.max(1) {
            return Err(domain(format!(
                "refinement {} below floor {}",
                self.refine,
                self.min_refine.max(1)
            )));
        }
        Ok(())
    }
}

/// One white-noise draw, kept in the frequency domain so paths for several
/// Hurst indices can be produced from it.
pub struct SharedNoise {
    m: usize,
    dt: f64,
    refine: usize,
    past_cells: usize,
    total_cells: usize,
    spectrum: Vec<Complex<f64>>,
    seed: u64,
}

impl std::fmt::Debug for SharedNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedNoise")
            .field("m", &self.m)
            .field("dt", &self.dt)
            .field("refine", &self.refine)
            .field("past_cells", &self.past_cells)
            .field("seed", &self.seed)
            .finish()
    }
}

impl SharedNoise {
    pub fn sample(m: usize, dt: f64, config: &MvnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if m == 0 {
            return Err(domain("need at least one step"));
        }
        if !(dt > 0.0) {
            return Err(domain(format!("step size must be positive, got {dt}")));
        }
        let refine = config.refine;
        let past_cells = ((config.horizon_factor * (m * refine) as f64).ceil() as usize).max(1);
        let total_cells = past_cells + m * refine;
        let len = (2 * total_cells).next_power_of_two();

        let cell = dt / refine as f64;
        let sd = cell.sqrt();
        let mut rng = rng_from_seed(seed);
        let mut spectrum = vec![Complex::new(0.0, 0.0); len];
        for slot in spectrum.iter_mut().take(total_cells) {
            *slot = Complex::new(sd * rng.sample::<f64, _>(StandardNormal), 0.0);
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut spectrum);
        Ok(SharedNoise { m, dt, refine, past_cells, total_cells, spectrum, seed })
    }

    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// fBm path with index `hurst` driven by this noise.
    pub fn fbm(&self, hurst: f64) -> Result<FbmPath> {
        check_hurst(hurst)?;
        let len = self.spectrum.len();
        let cell = self.dt / self.refine as f64;
        let a = hurst + 0.5;
        let lead = cell.powf(hurst - 0.5) / a;

        // Cell average of u_+^{H-1/2} over [n h, (n+1) h].
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        kernel[0] = Complex::new(lead, 0.0);
        for (n, slot) in kernel.iter_mut().enumerate().take(self.total_cells).skip(1) {
            let nf = n as f64;
            let diff = nf.powf(a) * (a * (1.0 / nf).ln_1p()).exp_m1();
            *slot = Complex::new(lead * diff, 0.0);
        }

        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(len).process(&mut kernel);
        for (k, s) in kernel.iter_mut().zip(&self.spectrum) {
            *k *= *s;
        }
        planner.plan_fft_inverse(len).process(&mut kernel);

        let norm = mvn_constant(hurst)? / len as f64;
        let offset = self.past_cells - 1;
        let origin = kernel[offset].re;
        let values = (0..=self.m)
            .map(|i| if i == 0 { 0.0 } else { norm * (kernel[offset + i * self.refine].re - origin) })
            .collect();
        Ok(FbmPath { hurst, dt: self.dt, values })
    }
}

/// Paths `B^{H1}` and `B^{H2}` on the same grid built from the same white
/// noise. Equal indices give bitwise-equal paths.
pub fn mvn_coupled_pair(
    h1: f64,
    h2: f64,
    m: usize,
    dt: f64,
    config: &MvnConfig,
    seed: u64,
) -> Result<CoupledPair> {
    check_hurst_coupled(h1)?;
    check_hurst_coupled(h2)?;
    let noise = SharedNoise::sample(m, dt, config, seed)?;
    Ok(CoupledPair { path_a: noise.fbm(h1)?, path_b: noise.fbm(h2)?, seed })
}
