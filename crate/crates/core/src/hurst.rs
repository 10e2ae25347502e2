//! Hurst index estimation from second-order increments at two dyadic scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SERIES_LEN: usize = 9;
pub const LOWER_CLIP: f64 = 0.5 + 1e-6;
pub const UPPER_CLIP: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    /// Clipped estimate.
    #[serde(rename = "hurst")]
    pub value: f64,
    pub raw: f64,
    /// Number of observations used.
    pub n: usize,
    pub clipped: bool,
}

impl HurstEstimate {
    fn from_raw(raw: f64, n: usize) -> Self {
        let value = raw.clamp(LOWER_CLIP, UPPER_CLIP);
        HurstEstimate { value, raw, n, clipped: value != raw }
    }
}

fn second_difference_energy<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut window = [0.0; 3];
    let mut seen = 0usize;
    let mut sum = 0.0;
    for v in values {
        window = [window[1], window[2], v];
        seen += 1;
        if seen >= 3 {
            let d2 = window[2] - 2.0 * window[1] + window[0];
            sum += d2 * d2;
        }
    }
    sum
}

/// `(S_fine, S_coarse)`: sums of squared second differences over the full
/// series and over its even-indexed subsample.
pub fn quadratic_variations(series: &[f64]) -> Result<(f64, f64)> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_SERIES_LEN} observations, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("series contains non-finite values".into()));
    }
    let fine = second_difference_energy(series.iter().copied());
    let coarse = second_difference_energy(series.iter().step_by(2).copied());
    Ok((fine, coarse))
}

fn raw_from_energies(fine: f64, coarse: f64) -> Result<f64> {
    if !(fine > 0.0) || !(coarse > 0.0) {
        return Err(Error::Degenerate("second differences vanish at one of the scales".into()));
    }
    Ok(0.5 - (fine / coarse).ln() / (2.0 * std::f64::consts::LN_2))
}

/// Estimate from a scalar series.
pub fn estimate_hurst(series: &[f64]) -> Result<HurstEstimate> {
    let (fine, coarse) = quadratic_variations(series)?;
    Ok(HurstEstimate::from_raw(raw_from_energies(fine, coarse)?, series.len()))
}

/// Estimate for a row-major series with `dim` components: per-component raw
/// estimates are averaged before clipping.
pub fn estimate_hurst_multi(values: &[f64], dim: usize) -> Result<HurstEstimate> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not split into {dim} components", values.len())));
    }
    let n = values.len() / dim;
    let mut raw = 0.0;
    for c in 0..dim {
        let column: Vec<f64> = values.iter().skip(c).step_by(dim).copied().collect();
        let (fine, coarse) = quadratic_variations(&column)?;
        raw += raw_from_energies(fine, coarse)?;
    }
    Ok(HurstEstimate::from_raw(raw / dim as f64, n))
}

/// Estimate from several independent row-major series sharing one index:
/// the energies of each component are summed over series first.
pub fn estimate_hurst_pooled(series: &[&[f64]], dim: usize) -> Result<HurstEstimate> {
    if series.is_empty() {
        return Err(Error::Degenerate("no series supplied".into()));
    }
    let mut fine = vec![0.0; dim];
    let mut coarse = vec![0.0; dim];
    let mut n = 0;
    for s in series {
        if dim == 0 || s.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not split into {dim} components", s.len())));
        }
        n += s.len() / dim;
        for c in 0..dim {
            let column: Vec<f64> = s.iter().skip(c).step_by(dim).copied().collect();
            let (f, g) = quadratic_variations(&column)?;
            fine[c] += f;
            coarse[c] += g;
        }
    }
    let mut raw = 0.0;
    for c in 0..dim {
        raw += raw_from_energies(fine[c], coarse[c])?;
    }
    Ok(HurstEstimate::from_raw(raw / dim as f64, n))
}
