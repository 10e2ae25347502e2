//! Fitting drift and diffusion networks to coarse observations by minimising
//! the fractional path loss, with validation-based early stopping.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::hurst::{estimate_hurst_pooled, HurstEstimate};
use crate::metrics::{
    frac_norm_with_gradient, frac_path_norm, mean_std, recovery_metrics, uniform_eval_points, PathDiff,
    RecoveryReport, DEFAULT_EVAL_POINTS,
};
use crate::net::{adam_step, AdamConfig, AdamState, NetParams, NeuralField, DEFAULT_CLIP};
use crate::sde::{downsample, euler_rollout, neural_rollout, rollout_vjp_into, sample_increments, Dataset, NoiseSource, Sample};
use crate::rng::{derive_seed, rng_from_seed};

/// Which driving noise the model rollouts use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// The recorded increments that generated each trajectory.
    #[default]
    Oracle,
    /// fBm with the estimated index built from the same white noise as the
    /// data; needs a dataset generated with Mandelbrot–van Ness noise.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub width: usize,
    /// Norm exponent; `None` picks `(1.5 - Ĥ) / 2`.
    pub alpha: Option<f64>,
    /// Replaces the estimated Hurst index when set.
    pub hurst: Option<f64>,
    pub adam: AdamConfig,
    pub clip: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub group_size: usize,
    pub noise_mode: NoiseMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 128,
            alpha: None,
            hurst: None,
            adam: AdamConfig::default(),
            clip: DEFAULT_CLIP,
            max_epochs: 500,
            patience: 20,
            group_size: 10,
            noise_mode: NoiseMode::Oracle,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("width must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be at least 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::Config(format!("alpha must lie in (0, 1/2), got {a}")));
            }
        }
        if let Some(h) = self.hurst {
            if !(h > 0.5 && h < 1.0) {
                return Err(Error::Config(format!("hurst override must lie in (1/2, 1), got {h}")));
            }
        }
        if !(self.clip > 0.0) || !(self.adam.learning_rate > 0.0) || !(self.adam.weight_decay >= 0.0) {
            return Err(Error::Config("clip and learning_rate must be positive, weight_decay non-negative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Midpoint of `(1 - H, 1/2)`.
pub fn default_alpha(hurst: f64) -> f64 {
    (1.0 - hurst + 0.5) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Epoch 0 is the initial model.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use crate::format::f64_17;
        let mut text = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            text.push_str(&format!("{},{},{}\n", r.epoch, f64_17(r.train_loss), f64_17(r.val_loss)));
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub field: NeuralField,
    pub history: TrainHistory,
    pub hurst: HurstEstimate,
    /// Index used for α and coupled noise (estimate or override).
    pub hurst_used: f64,
    pub alpha: f64,
    pub drift_optimizer: AdamState,
    pub diffusion_optimizer: AdamState,
}

/// Hurst estimate pooled over the training observations.
pub fn estimate_dataset_hurst(dataset: &Dataset) -> Result<HurstEstimate> {
    let series: Vec<&[f64]> = dataset.train.iter().map(|s| s.observations.values.as_slice()).collect();
    estimate_hurst_pooled(&series, dataset.dim)
}

/// Driving increments for each sample under `mode`.
pub fn driving_increments(dataset: &Dataset, samples: &[Sample], mode: NoiseMode, hurst: f64) -> Result<Vec<Vec<f64>>> {
    match mode {
        NoiseMode::Oracle => Ok(samples.iter().map(|s| s.trajectory.increments.clone()).collect()),
        NoiseMode::Coupled => {
            let cfg = &dataset.config;
            if !matches!(cfg.noise, NoiseSource::Mvn(_)) {
                return Err(Error::Config("coupled noise mode needs a dataset generated with mvn noise".into()));
            }
            samples
                .par_iter()
                .map(|s| sample_increments(&cfg.noise, hurst, dataset.dim, cfg.fine_steps(), cfg.fine_dt(), s.noise_seed))
                .collect()
        }
    }
}

struct Problem<'a> {
    samples: &'a [Sample],
    increments: Vec<Vec<f64>>,
    k: usize,
    dt: f64,
    coarse_dt: f64,
    alpha: f64,
}

impl Problem<'_> {
    fn diff(&self, field: &NeuralField, j: usize) -> Result<(PathDiff, crate::sde::Trajectory)> {
        let s = &self.samples[j];
        let traj = neural_rollout(field, s.x0(), &self.increments[j], self.dt)?;
        let coarse = downsample(&traj, self.k)?;
        let diff = PathDiff::between(&coarse.values, &s.observations.values, traj.dim, self.coarse_dt, self.alpha)?;
        Ok((diff, traj))
    }

    fn loss(&self, field: &NeuralField, j: usize) -> Option<f64> {
        self.diff(field, j).ok().map(|(d, _)| frac_path_norm(&d)).filter(|v| v.is_finite())
    }

    fn mean_loss(&self, field: &NeuralField, epoch: usize) -> Result<f64> {
        let losses: Vec<Option<f64>> = (0..self.samples.len()).into_par_iter().map(|j| self.loss(field, j)).collect();
        let mut sum = 0.0;
        for (j, l) in losses.into_iter().enumerate() {
            sum += l.ok_or(Error::NonFiniteLoss { epoch, trajectory: self.samples[j].index })?;
        }
        Ok(sum / self.samples.len() as f64)
    }

    fn gradient(&self, field: &NeuralField, j: usize) -> Option<(f64, NetParams, NetParams)> {
        let (diff, traj) = self.diff(field, j).ok()?;
        let (loss, g) = frac_norm_with_gradient(&diff);
        if !loss.is_finite() {
            return None;
        }
        let d = traj.dim;
        let mut upstream = vec![0.0; traj.states.len()];
        for m in 0..diff.points() {
            upstream[m * self.k * d..(m * self.k + 1) * d].copy_from_slice(&g[m * d..(m + 1) * d]);
        }
        let mut gb = field.drift.zeros_like();
        let mut gs = field.diffusion.zeros_like();
        rollout_vjp_into(field, &traj, &upstream, &mut gb, &mut gs).ok()?;
        Some((loss, gb, gs))
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let started = Instant::now();
    let estimate = estimate_dataset_hurst(dataset)?;
    let hurst_used = config.hurst.unwrap_or(estimate.value);
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(hurst_used));
    let cfg = &dataset.config;
    let problem = |samples| -> Result<Problem> {
        Ok(Problem {
            samples,
            increments: driving_increments(dataset, samples, config.noise_mode, hurst_used)?,
            k: cfg.k,
            dt: cfg.fine_dt(),
            coarse_dt: cfg.coarse_dt,
            alpha,
        })
    };
    let train_set = problem(&dataset.train)?;
    let val_set = problem(&dataset.val)?;

    let mut rng = rng_from_seed(derive_seed(config.seed, "init", 0));
    let mut field = NeuralField::init(dataset.dim, config.width, config.clip, &mut rng);
    let mut drift_opt = AdamState::new(config.adam, &field.drift);
    let mut diffusion_opt = AdamState::new(config.adam, &field.diffusion);

    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: train_set.mean_loss(&field, 0)?,
        val_loss: val_set.mean_loss(&field, 0)?,
    }];
    let mut best = (0, epochs[0].val_loss, field.clone(), drift_opt.clone(), diffusion_opt.clone());
    let mut stale = 0;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng_from_seed(derive_seed(config.seed, "shuffle", epoch as u64)));
        for group in order.chunks(config.group_size) {
            let results: Vec<Option<(f64, NetParams, NetParams)>> =
                group.par_iter().map(|&j| train_set.gradient(&field, j)).collect();
            let mut gb = field.drift.zeros_like();
            let mut gs = field.diffusion.zeros_like();
            for (&j, r) in group.iter().zip(results) {
                let (_, b, s) = r.ok_or(Error::NonFiniteLoss { epoch, trajectory: dataset.train[j].index })?;
                gb.data.iter_mut().zip(&b.data).for_each(|(a, x)| *a += x);
                gs.data.iter_mut().zip(&s.data).for_each(|(a, x)| *a += x);
            }
            let scale = 1.0 / group.len() as f64;
            gb.data.iter_mut().for_each(|x| *x *= scale);
            gs.data.iter_mut().for_each(|x| *x *= scale);
            adam_step(&mut drift_opt, &mut field.drift, &gb)?;
            adam_step(&mut diffusion_opt, &mut field.diffusion, &gs)?;
            field.drift.clip_in_place(config.clip);
            field.diffusion.clip_in_place(config.clip);
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_set.mean_loss(&field, epoch)?,
            val_loss: val_set.mean_loss(&field, epoch)?,
        };
        epochs.push(record);
        if record.val_loss < best.1 {
            best = (epoch, record.val_loss, field.clone(), drift_opt.clone(), diffusion_opt.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_loss, field, drift_optimizer, diffusion_optimizer) = best;
    Ok(TrainOutcome {
        field,
        history: TrainHistory { epochs, best_epoch, best_val_loss, wall_seconds: started.elapsed().as_secs_f64() },
        hurst: estimate,
        hurst_used,
        alpha,
        drift_optimizer,
        diffusion_optimizer,
    })
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub alpha: f64,
    pub noise_mode: NoiseMode,
    /// Index for coupled noise.
    pub hurst: f64,
    pub eval_points: usize,
    pub eval_seed: u64,
    /// Half-width of the state box for recovery errors; `None` uses the
    /// dataset coverage radius.
    pub radius: Option<f64>,
}

impl EvalConfig {
    pub fn from_outcome(outcome: &TrainOutcome, noise_mode: NoiseMode, seed: u64) -> Self {
        EvalConfig {
            alpha: outcome.alpha,
            noise_mode,
            hurst: outcome.hurst_used,
            eval_points: DEFAULT_EVAL_POINTS,
            eval_seed: derive_seed(seed, "eval-points", 0),
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss_mean: f64,
    pub loss_std: f64,
    pub n: usize,
    pub alpha: f64,
    pub radius: f64,
    pub recovery: RecoveryReport,
}

/// Test-split path loss statistics of `model` and its coefficient errors
/// against `truth`.
pub fn evaluate<M, T>(model: &M, truth: &T, dataset: &Dataset, config: &EvalConfig) -> Result<EvalReport>
where
    M: CoefficientField + ?Sized,
    T: CoefficientField + ?Sized,
{
    if dataset.test.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let cfg = &dataset.config;
    let increments = driving_increments(dataset, &dataset.test, config.noise_mode, config.hurst)?;
    let losses = dataset
        .test
        .iter()
        .zip(&increments)
        .map(|(s, incs)| {
            let traj = euler_rollout(model, s.x0(), incs, cfg.fine_dt())?;
            let coarse = downsample(&traj, cfg.k)?;
            let diff = PathDiff::between(&coarse.values, &s.observations.values, dataset.dim, cfg.coarse_dt, config.alpha)?;
            Ok(frac_path_norm(&diff))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (loss_mean, loss_std) = mean_std(&losses);
    let radius = config.radius.unwrap_or(dataset.coverage_radius);
    let points = uniform_eval_points(dataset.dim, cfg.horizon(), radius, config.eval_points, config.eval_seed);
    let recovery = recovery_metrics(model, truth, &points)?;
    Ok(EvalReport { loss_mean, loss_std, n: losses.len(), alpha: config.alpha, radius, recovery })
}

/// Everything needed to resume or audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub field: NeuralField,
    pub drift_optimizer: AdamState,
    pub diffusion_optimizer: AdamState,
    pub step: u64,
    pub alpha: f64,
    pub hurst: f64,
    pub config: TrainConfig,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(outcome: &TrainOutcome, config: &TrainConfig) -> Self {
        Checkpoint {
            field: outcome.field.clone(),
            drift_optimizer: outcome.drift_optimizer.clone(),
            diffusion_optimizer: outcome.diffusion_optimizer.clone(),
            step: outcome.drift_optimizer.step,
            alpha: outcome.alpha,
            hurst: outcome.hurst_used,
            config: config.clone(),
            config_hash: config.hash(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        NeuralField::new(cp.field.drift.clone(), cp.field.diffusion.clone())?;
        Ok(cp)
    }
}
