use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_hurst, fbm_covariance, FbmPath};
use crate::error::{domain, Error, Result};
use crate::rng::rng_from_seed;

/// Largest grid the dense generator accepts.
pub const MAX_CHOLESKY_STEPS: usize = 2048;

/// Dense generator: `B = L z` with `L L^T` the covariance of
/// `(B_{dt}, …, B_{m dt})`.
#[derive(Debug, Clone)]
pub struct CholeskyFbm {
    hurst: f64,
    dt: f64,
    lower: DMatrix<f64>,
}

impl CholeskyFbm {
    pub fn new(hurst: f64, m: usize, dt: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if m == 0 || m > MAX_CHOLESKY_STEPS {
            return Err(domain(format!(
                "Cholesky generator needs 1 <= m <= {MAX_CHOLESKY_STEPS}, got {m}"
            )));
        }
        if !(dt > 0.0) {
            return Err(domain(format!("step size must be positive, got {dt}")));
        }
        let mut cov = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let c = fbm_covariance(hurst, (i + 1) as f64 * dt, (j + 1) as f64 * dt)?;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let lower = cov.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
        Ok(CholeskyFbm { hurst, dt, lower })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        let m = self.lower.nrows();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &self.lower * z;
        let mut values = Vec::with_capacity(m + 1);
        values.push(0.0);
        values.extend(x.iter().copied());
        FbmPath { hurst: self.hurst, dt: self.dt, values }
    }
}

/// Exact fBm path by dense factorisation; `m <= 2048`.
pub fn fbm_cholesky(hurst: f64, m: usize, dt: f64, seed: u64) -> Result<FbmPath> {
    Ok(CholeskyFbm::new(hurst, m, dt)?.sample(&mut rng_from_seed(seed)))
}
