//! Fractional Brownian motion.
//!
//! Three generators live here:
//!
//! * [`DaviesHarte`]: exact sampling of the increment sequence by circulant
//!   embedding. This is what datasets use.
//! * [`CholeskyFbm`]: dense factorisation of the path covariance. Slow and
//!   capped at 2048 steps; it is the reference the other two are checked
//!   against.
//! * [`SharedNoise`]: a truncated Mandelbrot–van Ness moving average. One
//!   white-noise draw can be turned into paths for any number of Hurst
//!   indices, which is how paths `B^{H1}` and `B^{H2}` are coupled.

mod cholesky;
mod davies_harte;
mod mvn;

use std::io::Write;

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::format::f64_17;

pub use cholesky::{fbm_cholesky, CholeskyFbm, MAX_CHOLESKY_STEPS};
pub use davies_harte::{fbm_davies_harte, fgn_autocovariance, DaviesHarte};
pub use mvn::{mvn_coupled_pair, MvnConfig, SharedNoise};

/// A sampled fBm path on the grid `t_i = i * dt`, `i = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub hurst: f64,
    pub dt: f64,
    /// `values[0]` is always zero.
    pub values: Vec<f64>,
}

impl FbmPath {
    pub(crate) fn from_increments(hurst: f64, dt: f64, increments: &[f64]) -> Self {
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &dx in increments {
            acc += dx;
            values.push(acc);
        }
        FbmPath { hurst, dt, values }
    }

    /// Number of steps `m`.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Writes `t,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", f64_17(self.time(i)), f64_17(*v))?;
        }
        Ok(())
    }
}

/// Two paths with different Hurst indices built from the same white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub path_a: FbmPath,
    pub path_b: FbmPath,
    pub seed: u64,
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("Hurst index {h} outside (0, 1)")))
    }
}

pub(crate) fn check_hurst_coupled(h: f64) -> Result<()> {
    if h > 0.5 && h < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("Hurst index {h} outside (1/2, 1)")))
    }
}

/// `E[B_t B_s] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(h: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(t >= 0.0 && s >= 0.0) {
        return Err(domain(format!("times must be non-negative, got ({t}, {s})")));
    }
    let two_h = 2.0 * h;
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Normalising constant of the Mandelbrot–van Ness kernel
/// `(t - s)_+^{H-1/2} - (-s)_+^{H-1/2}` giving `Var(B_1) = 1`:
/// `C_H^2 = Γ(2H + 1) sin(πH) / Γ(H + 1/2)^2`.
pub fn mvn_constant(h: f64) -> Result<f64> {
    check_hurst(h)?;
    let num = gamma(2.0 * h + 1.0) * (std::f64::consts::PI * h).sin();
    Ok(num.sqrt() / gamma(h + 0.5))
}

/// Correlation `E[B_1^{H1} B_1^{H2}]` of two Mandelbrot–van Ness paths driven
/// by the same white noise. Symmetric, in `(0, 1]`, and equal to one on the
/// diagonal.
pub fn cross_factor(h1: f64, h2: f64) -> Result<f64> {
    check_hurst_coupled(h1)?;
    check_hurst_coupled(h2)?;
    let c = mvn_constant(h1)? * mvn_constant(h2)?;
    let ratio = gamma(0.5 + h1) / gamma(0.5 - h2) + gamma(0.5 + h2) / gamma(0.5 - h1);
    Ok(-gamma(-h1 - h2) * c * ratio)
}

/// `E[(ΔB^{H1} - ΔB^{H2})^2]` over a lag `v` for the shared-noise coupling:
/// `v^{2H1} + v^{2H2} - 2 v^{H1+H2} f(H1, H2)`.
pub fn cross_increment_variance(h1: f64, h2: f64, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(domain(format!("lag must be non-negative, got {v}")));
    }
    if h1 == h2 {
        check_hurst_coupled(h1)?;
        return Ok(0.0);
    }
    let f = cross_factor(h1, h2)?;
    Ok(v.powf(2.0 * h1) + v.powf(2.0 * h2) - 2.0 * v.powf(h1 + h2) * f)
}
