//! Error-decomposition sweeps: network width, Hurst fitting and time step.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fields::{benchmark_1d, CoefficientField, ZeroDiffusion};
use crate::format::f64_17;
use crate::hurst::estimate_hurst_multi;
use crate::metrics::{frac_path_norm, mean_std, PathDiff};
use crate::noise::{DaviesHarte, MvnConfig, SharedNoise};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sde::{downsample, euler_rollout, generate_dataset, DatasetConfig};
use crate::train::{default_alpha, train, TrainConfig};

/// Description of the build, from `git describe` at compile time.
pub const BUILD_DESCRIBE: &str = env!("FRACSDE_GIT_DESCRIBE");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub control: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Reference curve evaluated at `control`, when the sweep has one.
    pub overlay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub name: String,
    /// What the control column holds.
    pub control_name: String,
    pub rows: Vec<SweepRow>,
    /// Least-squares log-log slope of `mean` against `control`.
    pub slope: f64,
    /// Reference exponent.
    pub slope_ref: f64,
    /// Replicas discarded (e.g. degenerate Hurst estimates).
    pub dropped: usize,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl SweepTable {
    pub fn controls(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.control).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean).collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("control,mean,std,n,slope_ref,overlay\n");
        for r in &self.rows {
            let overlay = r.overlay.map(f64_17).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f64_17(r.control),
                f64_17(r.mean),
                f64_17(r.std),
                r.n,
                f64_17(self.slope_ref),
                overlay
            ));
        }
        out
    }

    /// Writes `sweep_<name>.csv` and `sweep_<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let csv = dir.join(format!("sweep_{}.csv", self.name));
        let json = dir.join(format!("sweep_{}.json", self.name));
        std::fs::write(&csv, self.csv())?;
        let manifest = serde_json::json!({
            "name": self.name,
            "control": self.control_name,
            "slope": self.slope,
            "slope_ref": self.slope_ref,
            "dropped": self.dropped,
            "seed": self.seed,
            "config": self.config,
            "build": BUILD_DESCRIBE,
            "rows": self.rows,
        });
        std::fs::write(&json, serde_json::to_string_pretty(&manifest)?)?;
        Ok(vec![csv, json])
    }

    fn finish(mut self) -> Result<Self> {
        let xs = self.controls();
        let ys = self.means();
        self.slope = loglog_slope(&xs, &ys)?;
        Ok(self)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain(format!("need two equally long lists of at least 2 points, got {} and {}", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(domain("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(domain("control values are all equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain("need two equally long lists of at least 2 points"));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m) * (a - m)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m) * (b - m)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sweep control values must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

fn check_replicas(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("need at least one replica".into()));
    }
    Ok(())
}

fn sample_x0(dim: usize, n_box: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal).clamp(-n_box, n_box)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSweepConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for WidthSweepConfig {
    fn default() -> Self {
        WidthSweepConfig { dataset: DatasetConfig::default(), train: TrainConfig::default(), replicas: 3, seed: 0 }
    }
}

/// Best validation loss per hidden width on one 1D benchmark dataset, with
/// fresh initialisation seeds per replica. `on_row` sees every finished row.
pub fn width_sweep(
    widths: &[usize],
    config: &WidthSweepConfig,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<SweepTable> {
    let controls: Vec<f64> = widths.iter().map(|&w| w as f64).collect();
    check_increasing(&controls)?;
    check_replicas(config.replicas)?;
    let field = benchmark_1d();
    let data_cfg = DatasetConfig { seed: derive_seed(config.seed, "width/dataset", 0), ..config.dataset.clone() };
    let dataset = generate_dataset(&field, &data_cfg)?;
    let mut rows = Vec::new();
    for &w in widths {
        let mut losses = Vec::with_capacity(config.replicas);
        for r in 0..config.replicas {
            let cfg = TrainConfig {
                width: w,
                seed: derive_seed(config.seed, &format!("width/{w}"), r as u64),
                ..config.train.clone()
            };
            losses.push(train(&dataset, &cfg)?.history.best_val_loss);
        }
        let (mean, std) = mean_std(&losses);
        let row = SweepRow { control: w as f64, mean, std, n: losses.len(), overlay: None };
        on_row(&row)?;
        rows.push(row);
    }
    let first = rows[0];
    for r in &mut rows {
        r.overlay = Some(first.mean * (r.control / first.control).powf(-0.5));
    }
    SweepTable {
        name: "width".into(),
        control_name: "width".into(),
        rows,
        slope: f64::NAN,
        slope_ref: -0.5,
        dropped: 0,
        seed: config.seed,
        config: serde_json::to_value(config)?,
    }
    .finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittingSweepConfig {
    pub hurst: f64,
    pub horizon: f64,
    /// Fine steps per observation interval.
    pub k: usize,
    pub replicas: usize,
    /// Norm exponent; `None` uses the midpoint for the true index.
    pub alpha: Option<f64>,
    pub mvn: MvnConfig,
    pub n_box: f64,
    /// Exponent in the `(log M / M)^{γ/4}` overlay.
    pub gamma: f64,
    /// Uses the true index instead of the estimate (zero-error control).
    pub true_hurst: bool,
    pub seed: u64,
}

impl Default for FittingSweepConfig {
    fn default() -> Self {
        FittingSweepConfig {
            hurst: 0.7,
            horizon: 1.0,
            k: 4,
            replicas: 200,
            alpha: None,
            mvn: MvnConfig { refine: 1, ..MvnConfig::default() },
            n_box: 4.0,
            gamma: 0.51,
            true_hurst: false,
            seed: 0,
        }
    }
}

/// Fractional-norm distance between true-coefficient paths driven by
/// `B^H` and by `B^{Ĥ}` (same white noise), with `Ĥ` estimated from `M`
/// observations on a fixed horizon.
pub fn fitting_sweep(
    ms: &[usize],
    config: &FittingSweepConfig,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<SweepTable> {
    let controls: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    check_increasing(&controls)?;
    check_replicas(config.replicas)?;
    crate::noise::check_hurst_coupled(config.hurst)?;
    if config.k == 0 || !(config.horizon > 0.0) {
        return Err(Error::Config("k and horizon must be positive".into()));
    }
    let field = benchmark_1d();
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(config.hurst));
    let mut rows = Vec::new();
    let mut dropped = 0;
    for &m in ms {
        let coarse_dt = config.horizon / m as f64;
        let dt = coarse_dt / config.k as f64;
        let steps = m * config.k;
        let results: Vec<Result<Option<f64>>> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(config.seed, &format!("fitting/{m}"), r as u64);
                let noise = SharedNoise::sample(steps, dt, &config.mvn, derive_seed(seed, "noise", 0))?;
                let x0 = sample_x0(1, config.n_box, derive_seed(seed, "x0", 0));
                let truth = euler_rollout(&field, &x0, &noise.fbm(config.hurst)?.increments(), dt)?;
                let observed = downsample(&truth, config.k)?;
                let h_fit = if config.true_hurst {
                    config.hurst
                } else {
                    match estimate_hurst_multi(&observed.values, 1) {
                        Ok(e) => e.value,
                        Err(Error::Degenerate(_)) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                };
                let fitted = euler_rollout(&field, &x0, &noise.fbm(h_fit)?.increments(), dt)?;
                let coarse = downsample(&fitted, config.k)?;
                let diff = PathDiff::between(&coarse.values, &observed.values, 1, coarse_dt, alpha)?;
                Ok(Some(frac_path_norm(&diff)))
            })
            .collect();
        let mut errors = Vec::new();
        for r in results {
            match r? {
                Some(e) => errors.push(e),
                None => dropped += 1,
            }
        }
        if errors.is_empty() {
            return Err(Error::Degenerate(format!("every replica at M = {m} was dropped")));
        }
        let (mean, std) = mean_std(&errors);
        let row = SweepRow { control: m as f64, mean, std, n: errors.len(), overlay: None };
        on_row(&row)?;
        rows.push(row);
    }
    let bound = |m: f64| (m.ln() / m).powf(config.gamma / 4.0);
    let c = rows[0].mean / bound(rows[0].control);
    for r in &mut rows {
        r.overlay = Some(c * bound(r.control));
    }
    let table = SweepTable {
        name: if config.true_hurst { "fitting_control".into() } else { "fitting".into() },
        control_name: "observations".into(),
        rows,
        slope: f64::NAN,
        slope_ref: -config.gamma / 4.0,
        dropped,
        seed: config.seed,
        config: serde_json::to_value(config)?,
    };
    if config.true_hurst {
        // Zero errors have no log-log slope.
        return Ok(table);
    }
    table.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSweepConfig {
    pub hurst: f64,
    pub horizon: f64,
    /// Grid on which paths are compared.
    pub coarse_dt: f64,
    /// Reference step is the smallest swept step divided by this.
    pub reference_factor: usize,
    pub replicas: usize,
    pub alpha: Option<f64>,
    pub n_box: f64,
    /// Drops the diffusion term (deterministic Euler control).
    pub zero_diffusion: bool,
    pub seed: u64,
}

impl Default for TimeSweepConfig {
    fn default() -> Self {
        TimeSweepConfig {
            hurst: 0.7,
            horizon: 1.0,
            coarse_dt: 0.05,
            reference_factor: 8,
            replicas: 200,
            alpha: None,
            n_box: 4.0,
            zero_diffusion: false,
            seed: 0,
        }
    }
}

pub const DEFAULT_TIME_STEPS: [f64; 5] = [0.003125, 0.00625, 0.0125, 0.025, 0.05];

fn ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    ((r - n).abs() < 1e-9 * r && n >= 1.0).then_some(n as usize)
}

/// Euler error against a fine reference driven by the same fBm path, with
/// increments summed over nested cells at every coarser step.
pub fn time_sweep(
    dts: &[f64],
    config: &TimeSweepConfig,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<SweepTable> {
    check_increasing(dts)?;
    check_replicas(config.replicas)?;
    let reference_dt = dts[0] / config.reference_factor.max(1) as f64;
    let factors: Vec<usize> = dts
        .iter()
        .map(|&dt| {
            let f = ratio(dt, reference_dt).filter(|f| f.is_power_of_two());
            let c = ratio(config.coarse_dt, dt);
            match (f, c) {
                (Some(f), Some(_)) => Ok(f),
                _ => Err(Error::Config(format!(
                    "step {dt} is not dyadically nested with the reference {reference_dt} and coarse step {}",
                    config.coarse_dt
                ))),
            }
        })
        .collect::<Result<_>>()?;
    let steps = ratio(config.horizon, reference_dt)
        .ok_or_else(|| Error::Config("horizon is not a multiple of the reference step".into()))?;
    let coarse_every = ratio(config.coarse_dt, reference_dt).unwrap_or(1);
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(config.hurst));
    let generator = DaviesHarte::new(config.hurst, steps, reference_dt)?;
    let base = benchmark_1d();
    let field: Box<dyn CoefficientField> =
        if config.zero_diffusion { Box::new(ZeroDiffusion(base)) } else { Box::new(base) };

    let per_replica: Vec<Vec<f64>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, "time", r as u64);
            let x0 = sample_x0(1, config.n_box, derive_seed(seed, "x0", 0));
            let fine = generator.sample_increments(&mut rng_from_seed(derive_seed(seed, "noise", 0)));
            let reference = downsample(&euler_rollout(&field, &x0, &fine, reference_dt)?, coarse_every)?;
            factors
                .iter()
                .zip(dts)
                .map(|(&f, &dt)| {
                    let incs: Vec<f64> = fine.chunks(f).map(|c| c.iter().sum()).collect();
                    let path = euler_rollout(&field, &x0, &incs, dt)?;
                    let coarse = downsample(&path, coarse_every / f)?;
                    let diff = PathDiff::between(&coarse.values, &reference.values, 1, config.coarse_dt, alpha)?;
                    Ok(frac_path_norm(&diff))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, &dt) in dts.iter().enumerate() {
        let errs: Vec<f64> = per_replica.iter().map(|v| v[i]).collect();
        let (mean, std) = mean_std(&errs);
        let row = SweepRow { control: dt, mean, std, n: errs.len(), overlay: None };
        on_row(&row)?;
        rows.push(row);
    }
    let slope_ref = if config.zero_diffusion { 1.0 } else { 2.0 * config.hurst - 1.0 };
    let last = *rows.last().unwrap();
    for r in &mut rows {
        r.overlay = Some(last.mean * (r.control / last.control).powf(slope_ref));
    }
    SweepTable {
        name: if config.zero_diffusion { "time_control".into() } else { "time".into() },
        control_name: "dt".into(),
        rows,
        slope: f64::NAN,
        slope_ref,
        dropped: 0,
        seed: config.seed,
        config: serde_json::to_value(config)?,
    }
    .finish()
}
