//! Euler–Maruyama rollouts, coarse observations and datasets.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fields::CoefficientField;
use crate::format::f64_17;
use crate::net::{sigmoid, softplus, NetParams, NeuralField, DIFFUSION_FLOOR};
use crate::noise::{DaviesHarte, MvnConfig, SharedNoise};
use crate::rng::{derive_seed, rng_from_seed};

/// A path on the fine grid `t_i = i * dt` together with the driving
/// increments `ΔB_i = B_{t_{i+1}} - B_{t_i}`. States and increments are
/// stored row-major, `dim` entries per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub dim: usize,
    pub hurst: Option<f64>,
    pub states: Vec<f64>,
    pub increments: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.time(i)).collect()
    }
}

/// Values on the coarse grid `t_m = m * dt`, `m = 0..=M`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub dt: f64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Observations {
    /// Number of grid points, `M + 1`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, m: usize) -> &[f64] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

/// `X_{i+1} = X_i + b(t_i, X_i) dt + σ(t_i, X_i) ⊙ ΔB_i`.
pub fn euler_rollout<F: CoefficientField + ?Sized>(
    field: &F,
    x0: &[f64],
    increments: &[f64],
    dt: f64,
) -> Result<Trajectory> {
    let d = field.dim();
    if x0.len() != d {
        return Err(Error::Shape(format!("field has dimension {d}, initial state has {}", x0.len())));
    }
    if increments.is_empty() || increments.len() % d != 0 {
        return Err(Error::Shape(format!(
            "need a positive multiple of {d} increments, got {}",
            increments.len()
        )));
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let n = increments.len() / d;
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d];
    for i in 0..n {
        let t = i as f64 * dt;
        let x = &states[i * d..(i + 1) * d];
        field.drift(t, x, &mut b);
        field.diffusion(t, x, &mut s);
        let db = &increments[i * d..(i + 1) * d];
        let next: Vec<f64> = (0..d).map(|c| x[c] + b[c] * dt + s[c] * db[c]).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: i + 1 });
        }
        states.extend_from_slice(&next);
    }
    Ok(Trajectory { dt, dim: d, hurst: None, states, increments: increments.to_vec() })
}

/// Keeps every `k`-th state.
pub fn downsample(traj: &Trajectory, k: usize) -> Result<Observations> {
    let n = traj.steps();
    if k == 0 || n % k != 0 {
        return Err(domain(format!("{n} fine steps are not divisible by k = {k}")));
    }
    let values = (0..=n / k).flat_map(|m| traj.state(m * k).iter().copied()).collect();
    Ok(Observations { dt: k as f64 * traj.dt, dim: traj.dim, values })
}

/// Gradients of `Σ_i <upstream_i, X_i>` with respect to both networks,
/// accumulated into `drift_grad` and `diffusion_grad`.
///
/// `upstream` has one entry per fine state (row-major). The rollout is
/// replayed backwards from the stored states, so `traj` must have been
/// produced by `field` on its own increments.
pub fn rollout_vjp_into(
    field: &NeuralField,
    traj: &Trajectory,
    upstream: &[f64],
    drift_grad: &mut NetParams,
    diffusion_grad: &mut NetParams,
) -> Result<()> {
    let d = traj.dim;
    let n = traj.steps();
    if upstream.len() != (n + 1) * d {
        return Err(Error::Shape(format!(
            "upstream has {} entries, trajectory has {} states of dimension {d}",
            upstream.len(),
            n + 1
        )));
    }
    if field.drift.output_dim != d
        || !field.drift.same_shape(drift_grad)
        || !field.diffusion.same_shape(diffusion_grad)
    {
        return Err(Error::Shape("network and gradient shapes disagree with trajectory".into()));
    }
    let dt = traj.dt;
    let mut input = vec![0.0; d + 1];
    let mut hidden_b = vec![0.0; field.drift.width];
    let mut hidden_s = vec![0.0; field.diffusion.width];
    let mut out_b = vec![0.0; d];
    let mut raw_s = vec![0.0; d];
    let mut up_b = vec![0.0; d];
    let mut up_s = vec![0.0; d];
    let mut in_grad_b = vec![0.0; d + 1];
    let mut in_grad_s = vec![0.0; d + 1];

    // Adjoint of X_{i+1}.
    let mut lambda = upstream[n * d..].to_vec();
    for i in (0..n).rev() {
        input[0] = traj.time(i);
        input[1..].copy_from_slice(traj.state(i));
        field.drift.forward_into(&input, &mut hidden_b, &mut out_b);
        field.diffusion.forward_into(&input, &mut hidden_s, &mut raw_s);
        let db = traj.increment(i);
        for c in 0..d {
            up_b[c] = dt * lambda[c];
            up_s[c] = lambda[c] * db[c] * sigmoid(raw_s[c]);
        }
        field.drift.backward_into(&input, &hidden_b, &up_b, drift_grad, &mut in_grad_b);
        field.diffusion.backward_into(&input, &hidden_s, &up_s, diffusion_grad, &mut in_grad_s);
        for c in 0..d {
            lambda[c] += upstream[i * d + c] + in_grad_b[c + 1] + in_grad_s[c + 1];
        }
    }
    Ok(())
}

pub fn rollout_vjp(
    field: &NeuralField,
    traj: &Trajectory,
    upstream: &[f64],
) -> Result<(NetParams, NetParams)> {
    let mut gb = field.drift.zeros_like();
    let mut gs = field.diffusion.zeros_like();
    rollout_vjp_into(field, traj, upstream, &mut gb, &mut gs)?;
    Ok((gb, gs))
}

/// Fast forward rollout for a [`NeuralField`], reusing scratch buffers.
pub fn neural_rollout(field: &NeuralField, x0: &[f64], increments: &[f64], dt: f64) -> Result<Trajectory> {
    let d = field.drift.output_dim;
    if x0.len() != d || increments.is_empty() || increments.len() % d != 0 {
        return Err(Error::Shape("initial state or increments do not match the field".into()));
    }
    let n = increments.len() / d;
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut input = vec![0.0; d + 1];
    let mut hidden_b = vec![0.0; field.drift.width];
    let mut hidden_s = vec![0.0; field.diffusion.width];
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d];
    for i in 0..n {
        input[0] = i as f64 * dt;
        input[1..].copy_from_slice(&states[i * d..(i + 1) * d]);
        field.drift.forward_into(&input, &mut hidden_b, &mut b);
        field.diffusion.forward_into(&input, &mut hidden_s, &mut s);
        for c in 0..d {
            let sigma = softplus(s[c]) + DIFFUSION_FLOOR;
            let next = input[c + 1] + b[c] * dt + sigma * increments[i * d + c];
            if !next.is_finite() {
                return Err(Error::NonFiniteState { step: i + 1 });
            }
            states.push(next);
        }
    }
    Ok(Trajectory { dt, dim: d, hurst: None, states, increments: increments.to_vec() })
}

/// How the driving fBm of a dataset is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSource {
    DaviesHarte,
    /// Mandelbrot–van Ness paths; the white noise can be replayed for another
    /// Hurst index from the stored per-trajectory seed.
    Mvn(MvnConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Benchmark name, recorded for reproducibility.
    pub field: String,
    pub hurst: f64,
    /// Observation step Δ̂.
    pub coarse_dt: f64,
    /// Fine steps per coarse step.
    pub k: usize,
    /// Number of coarse steps M.
    pub coarse_steps: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Initial states are projected onto `[-n_box, n_box]^d`.
    pub n_box: f64,
    pub seed: u64,
    pub noise: NoiseSource,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            field: "1d".into(),
            hurst: 0.7,
            coarse_dt: 0.05,
            k: 4,
            coarse_steps: 20,
            n_train: 100,
            n_val: 28,
            n_test: 32,
            n_box: 4.0,
            seed: 0,
            noise: NoiseSource::DaviesHarte,
        }
    }
}

impl DatasetConfig {
    pub fn fine_dt(&self) -> f64 {
        self.coarse_dt / self.k as f64
    }

    pub fn fine_steps(&self) -> usize {
        self.k * self.coarse_steps
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn horizon(&self) -> f64 {
        self.coarse_dt * self.coarse_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.coarse_steps == 0 {
            return Err(Error::Config("k and coarse_steps must be positive".into()));
        }
        if !(self.coarse_dt > 0.0) || !(self.n_box > 0.0) {
            return Err(Error::Config("coarse_dt and n_box must be positive".into()));
        }
        if self.total() == 0 {
            return Err(Error::Config("dataset needs at least one trajectory".into()));
        }
        crate::noise::check_hurst(self.hurst)
    }
}

/// Fine-grid increments of the `d` independent fBm components for one
/// trajectory, interleaved row-major.
pub fn sample_increments(
    noise: &NoiseSource,
    hurst: f64,
    d: usize,
    m: usize,
    dt: f64,
    noise_seed: u64,
) -> Result<Vec<f64>> {
    let columns: Vec<Vec<f64>> = match noise {
        NoiseSource::DaviesHarte => {
            let gen = DaviesHarte::new(hurst, m, dt)?;
            let mut rng = rng_from_seed(noise_seed);
            (0..d).map(|_| gen.sample_increments(&mut rng)).collect()
        }
        NoiseSource::Mvn(cfg) => (0..d)
            .map(|c| {
                let shared = SharedNoise::sample(m, dt, cfg, derive_seed(noise_seed, "component", c as u64))?;
                Ok(shared.fbm(hurst)?.increments())
            })
            .collect::<Result<_>>()?,
    };
    Ok((0..m).flat_map(|i| columns.iter().map(move |col| col[i])).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub noise_seed: u64,
    pub trajectory: Trajectory,
    pub observations: Observations,
}

impl Sample {
    pub fn x0(&self) -> &[f64] {
        self.trajectory.state(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub dim: usize,
    /// Smallest `N` with at least 99.9% of all fine states in `[-N, N]^d`.
    pub coverage_radius: f64,
    /// Fraction of fine states inside `[-n_box, n_box]^d`.
    pub inside_box_fraction: f64,
    pub regenerated: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

const MAX_ATTEMPTS: u64 = 64;

/// Draws `n_train + n_val + n_test` trajectories; the first `n_train` form
/// the training split, the next `n_val` validation, the rest test.
pub fn generate_dataset<F: CoefficientField + ?Sized>(field: &F, config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let d = field.dim();
    let m = config.fine_steps();
    let dt = config.fine_dt();
    let total = config.total();
    let mut samples = Vec::with_capacity(total);
    let mut regenerated = 0;
    for j in 0..total {
        let purpose = format!("trajectory/{j}");
        let mut attempt = 0;
        let sample = loop {
            let base = derive_seed(config.seed, &purpose, attempt);
            let mut rng = rng_from_seed(derive_seed(base, "x0", 0));
            let x0: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal).clamp(-config.n_box, config.n_box))
                .collect();
            let noise_seed = derive_seed(base, "noise", 0);
            let increments = sample_increments(&config.noise, config.hurst, d, m, dt, noise_seed)?;
            match euler_rollout(field, &x0, &increments, dt) {
                Ok(mut trajectory) => {
                    trajectory.hurst = Some(config.hurst);
                    let observations = downsample(&trajectory, config.k)?;
                    break Sample { index: j, noise_seed, trajectory, observations };
                }
                Err(Error::NonFiniteState { .. }) if attempt + 1 < MAX_ATTEMPTS => {
                    regenerated += 1;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        samples.push(sample);
    }
    if regenerated * 100 > total {
        return Err(Error::TooManyRegenerations { regenerated, total });
    }

    let (coverage_radius, inside_box_fraction) = coverage(&samples, d, config.n_box);
    let test = samples.split_off(config.n_train + config.n_val);
    let val = samples.split_off(config.n_train);
    Ok(Dataset {
        config: config.clone(),
        dim: d,
        coverage_radius,
        inside_box_fraction,
        regenerated,
        train: samples,
        val,
        test,
    })
}

fn coverage(samples: &[Sample], d: usize, n_box: f64) -> (f64, f64) {
    let mut radii: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.trajectory.states.chunks(d).map(|x| x.iter().fold(0.0, |a: f64, v| a.max(v.abs()))))
        .collect();
    radii.sort_by(f64::total_cmp);
    let n = radii.len();
    let idx = ((0.999 * n as f64).ceil() as usize).clamp(1, n) - 1;
    let inside = radii.iter().filter(|&&r| r <= n_box).count() as f64 / n as f64;
    (radii[idx], inside)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleEntry {
    index: usize,
    noise_seed: u64,
    fine: String,
    coarse: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    config: DatasetConfig,
    dim: usize,
    coverage_radius: f64,
    inside_box_fraction: f64,
    regenerated: usize,
    splits: Splits,
    samples: Vec<SampleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<serde_json::Value>,
}

impl Dataset {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Writes `manifest.json`, `trajectories/traj_NNN.csv` (fine grid:
    /// `t,x_1..x_d,dB_1..dB_d`, where row `i` carries `B_{t_i} - B_{t_{i-1}}`
    /// and row 0 carries zeros) and `observations/obs_NNN.csv` (`t,x_1..x_d`).
    /// `run` is embedded verbatim in the manifest. Returns the written files.
    pub fn save(&self, dir: &Path, run: Option<serde_json::Value>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir.join("trajectories"))?;
        fs::create_dir_all(dir.join("observations"))?;
        let d = self.dim;
        let header_x: Vec<String> = (1..=d).map(|c| format!("x_{c}")).collect();
        let header_db: Vec<String> = (1..=d).map(|c| format!("dB_{c}")).collect();
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for s in self.samples() {
            let fine = format!("trajectories/traj_{:03}.csv", s.index);
            let coarse = format!("observations/obs_{:03}.csv", s.index);
            let tr = &s.trajectory;
            let mut w = BufWriter::new(fs::File::create(dir.join(&fine))?);
            writeln!(w, "t,{},{}", header_x.join(","), header_db.join(","))?;
            for i in 0..=tr.steps() {
                let mut row = vec![f64_17(tr.time(i))];
                row.extend(tr.state(i).iter().map(|&v| f64_17(v)));
                if i == 0 {
                    row.extend((0..d).map(|_| f64_17(0.0)));
                } else {
                    row.extend(tr.increment(i - 1).iter().map(|&v| f64_17(v)));
                }
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
            let ob = &s.observations;
            let mut w = BufWriter::new(fs::File::create(dir.join(&coarse))?);
            writeln!(w, "t,{}", header_x.join(","))?;
            for m in 0..ob.len() {
                let mut row = vec![f64_17(m as f64 * ob.dt)];
                row.extend(ob.value(m).iter().map(|&v| f64_17(v)));
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
            written.push(dir.join(&fine));
            written.push(dir.join(&coarse));
            entries.push(SampleEntry { index: s.index, noise_seed: s.noise_seed, fine, coarse });
        }
        let manifest = DatasetManifest {
            config: self.config.clone(),
            dim: d,
            coverage_radius: self.coverage_radius,
            inside_box_fraction: self.inside_box_fraction,
            regenerated: self.regenerated,
            splits: Splits {
                train: self.train.iter().map(|s| s.index).collect(),
                val: self.val.iter().map(|s| s.index).collect(),
                test: self.test.iter().map(|s| s.index).collect(),
            },
            samples: entries,
            run,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        written.push(path);
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let d = manifest.dim;
        let cfg = &manifest.config;
        let mut by_index = std::collections::BTreeMap::new();
        for e in &manifest.samples {
            let fine = read_csv(&dir.join(&e.fine))?;
            let coarse = read_csv(&dir.join(&e.coarse))?;
            let bad = |msg: &str| Error::Parse { path: e.fine.clone(), msg: msg.to_string() };
            if fine.iter().any(|r| r.len() != 1 + 2 * d) || coarse.iter().any(|r| r.len() != 1 + d) {
                return Err(bad("unexpected column count"));
            }
            if fine.len() < 2 {
                return Err(bad("need at least two rows"));
            }
            let states = fine.iter().flat_map(|r| r[1..=d].iter().copied()).collect();
            let increments = fine[1..].iter().flat_map(|r| r[d + 1..].iter().copied()).collect();
            let trajectory = Trajectory { dt: cfg.fine_dt(), dim: d, hurst: Some(cfg.hurst), states, increments };
            let values = coarse.iter().flat_map(|r| r[1..].iter().copied()).collect();
            let observations = Observations { dt: cfg.coarse_dt, dim: d, values };
            by_index.insert(e.index, Sample { index: e.index, noise_seed: e.noise_seed, trajectory, observations });
        }
        let mut take = |ids: &[usize]| -> Result<Vec<Sample>> {
            ids.iter()
                .map(|i| {
                    by_index.remove(i).ok_or_else(|| Error::Parse {
                        path: "manifest.json".into(),
                        msg: format!("split references missing sample {i}"),
                    })
                })
                .collect()
        };
        let train = take(&manifest.splits.train)?;
        let val = take(&manifest.splits.val)?;
        let test = take(&manifest.splits.test)?;
        Ok(Dataset {
            config: manifest.config,
            dim: d,
            coverage_radius: manifest.coverage_radius,
            inside_box_fraction: manifest.inside_box_fraction,
            regenerated: manifest.regenerated,
            train,
            val,
            test,
        })
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { path: path.display().to_string(), msg: format!("line {}: {e}", n + 1) })?;
        rows.push(row);
    }
    Ok(rows)
}
