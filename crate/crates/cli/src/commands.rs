use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use fracsde::experiments::{
    fitting_sweep, time_sweep, width_sweep, FittingSweepConfig, SweepRow, TimeSweepConfig, WidthSweepConfig,
};
use fracsde::fields::{benchmark_by_name, CoefficientField};
use fracsde::format::f64_17;
use fracsde::hurst::{estimate_hurst, HurstEstimate};
use fracsde::net::AdamConfig;
use fracsde::noise::MvnConfig;
use fracsde::sde::{generate_dataset, Dataset, DatasetConfig, NoiseSource};
use fracsde::train::{
    estimate_dataset_hurst, evaluate as evaluate_model, train as train_model, Checkpoint, EvalConfig, NoiseMode,
    TrainConfig,
};

use crate::config::{CliError, CliResult, Settings};
use crate::output::{version, RunDir};

fn field_for(name: &str) -> CliResult<Box<dyn CoefficientField>> {
    benchmark_by_name(name).ok_or_else(|| CliError::Config(format!("unknown field `{name}` (expected 1d or 2d)")))
}

fn noise_mode(s: &Settings, key: &str) -> CliResult<NoiseMode> {
    match s.raw(key) {
        "oracle" => Ok(NoiseMode::Oracle),
        "coupled" => Ok(NoiseMode::Coupled),
        other => Err(CliError::Config(format!("invalid value `{other}` for key `{key}`: expected oracle or coupled"))),
    }
}

fn load_dataset(s: &Settings) -> CliResult<Dataset> {
    let dir = s.required("data")?;
    Dataset::load(Path::new(dir)).map_err(|e| CliError::Runtime(format!("cannot load dataset `{dir}`: {e}")))
}

const SIMULATE_KEYS: &[(&str, &str)] = &[
    ("out", ""),
    ("seed", "0"),
    ("field", "1d"),
    ("hurst", "0.7"),
    ("coarse_dt", "0.05"),
    ("k", "4"),
    ("coarse_steps", "20"),
    ("n_train", "100"),
    ("n_val", "28"),
    ("n_test", "32"),
    ("n_box", "4"),
    ("noise", "davies-harte"),
    ("mvn_horizon", "50"),
    ("mvn_refine", "8"),
];

pub fn simulate(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(SIMULATE_KEYS, args)?;
    let out = s.required("out")?.to_string();
    let seed: u64 = s.get("seed")?;
    let field_name = s.raw("field").to_string();
    let field = field_for(&field_name)?;
    let noise = match s.raw("noise") {
        "davies-harte" => NoiseSource::DaviesHarte,
        "mvn" => NoiseSource::Mvn(MvnConfig {
            horizon_factor: s.get("mvn_horizon")?,
            refine: s.get("mvn_refine")?,
            ..MvnConfig::default()
        }),
        other => {
            return Err(CliError::Config(format!("invalid value `{other}` for key `noise`: expected davies-harte or mvn")))
        }
    };
    let config = DatasetConfig {
        field: field_name,
        hurst: s.get("hurst")?,
        coarse_dt: s.get("coarse_dt")?,
        k: s.get("k")?,
        coarse_steps: s.get("coarse_steps")?,
        n_train: s.get("n_train")?,
        n_val: s.get("n_val")?,
        n_test: s.get("n_test")?,
        n_box: s.get("n_box")?,
        seed,
        noise,
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let run = RunDir::create(&out)?;
    let dataset = generate_dataset(&field, &config)?;
    let info = serde_json::json!({
        "command": "simulate",
        "seed": seed,
        "version": version(),
        "config": s.to_json(),
    });
    dataset.save(run.dir(), Some(info))?;
    let path = run.rename()?;
    println!(
        "wrote {} trajectories to {} ({} regenerated, coverage radius {:.4})",
        dataset.config.total(),
        path.display(),
        dataset.regenerated,
        dataset.coverage_radius
    );
    Ok(())
}

const HURST_KEYS: &[(&str, &str)] = &[("data", ""), ("input", ""), ("column", "x_1"), ("out", "")];

fn read_column(path: &str, column: &str) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read `{path}`: {e}")))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let idx = match header.iter().position(|h| *h == column) {
        Some(i) => i,
        None => column
            .parse::<usize>()
            .ok()
            .filter(|&i| i < header.len())
            .ok_or_else(|| CliError::Config(format!("column `{column}` not found in `{path}`")))?,
    };
    lines
        .enumerate()
        .map(|(n, l)| {
            l.split(',')
                .nth(idx)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Runtime(format!("`{path}` line {}: missing or invalid value", n + 2)))
        })
        .collect()
}

fn hurst_json(e: &HurstEstimate) -> serde_json::Value {
    serde_json::json!({ "hurst": e.value, "raw": e.raw, "n": e.n, "clipped": e.clipped })
}

pub fn estimate_hurst_cmd(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(HURST_KEYS, args)?;
    let estimate = match (s.raw("data").is_empty(), s.raw("input").is_empty()) {
        (false, true) => estimate_dataset_hurst(&load_dataset(&s)?)?,
        (true, false) => estimate_hurst(&read_column(s.raw("input"), s.raw("column"))?)?,
        _ => return Err(CliError::Config("give exactly one of `data` or `input`".into())),
    };
    let json = hurst_json(&estimate);
    println!("{}", serde_json::to_string(&json)?);
    if !s.raw("out").is_empty() {
        let mut run = RunDir::create(s.raw("out"))?;
        std::fs::write(run.file("hurst.json"), serde_json::to_string_pretty(&json)?)?;
        run.finish("estimate-hurst", &s, 0, json)?;
    }
    Ok(())
}

const TRAIN_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("out", ""),
    ("seed", "0"),
    ("width", "128"),
    ("alpha", ""),
    ("hurst", ""),
    ("lr", "0.001"),
    ("weight_decay", "0.0001"),
    ("clip", "5"),
    ("max_epochs", "500"),
    ("patience", "20"),
    ("group_size", "10"),
    ("noise_mode", "oracle"),
    ("eval_points", "4096"),
    ("radius", ""),
];

fn adam(s: &Settings) -> CliResult<AdamConfig> {
    Ok(AdamConfig { learning_rate: s.get("lr")?, weight_decay: s.get("weight_decay")?, ..AdamConfig::default() })
}

fn train_config(s: &Settings, seed: u64) -> CliResult<TrainConfig> {
    Ok(TrainConfig {
        width: s.get("width")?,
        alpha: s.optional("alpha")?,
        hurst: s.optional("hurst")?,
        adam: adam(s)?,
        clip: s.get("clip")?,
        max_epochs: s.get("max_epochs")?,
        patience: s.get("patience")?,
        group_size: s.get("group_size")?,
        noise_mode: noise_mode(s, "noise_mode")?,
        seed,
    })
}

pub fn train(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(TRAIN_KEYS, args)?;
    let seed: u64 = s.get("seed")?;
    let config = train_config(&s, seed)?;
    config.validate()?;
    let out = s.required("out")?.to_string();
    let dataset = load_dataset(&s)?;
    let truth = field_for(&dataset.config.field)?;
    let mut run = RunDir::create(&out)?;
    let outcome = train_model(&dataset, &config)?;
    Checkpoint::new(&outcome, &config).save(&run.file("checkpoint.json"))?;
    outcome.history.write_csv(&run.file("history.csv"))?;
    let mut eval = EvalConfig::from_outcome(&outcome, config.noise_mode, seed);
    eval.eval_points = s.get("eval_points")?;
    eval.radius = s.optional("radius")?;
    let report = evaluate_model(&outcome.field, &truth, &dataset, &eval)?;
    let report_json = serde_json::json!({
        "evaluation": report,
        "hurst_estimate": hurst_json(&outcome.hurst),
        "hurst_used": outcome.hurst_used,
        "alpha": outcome.alpha,
        "best_epoch": outcome.history.best_epoch,
        "best_val_loss": outcome.history.best_val_loss,
        "epochs_run": outcome.history.epochs.len() - 1,
        "wall_seconds": outcome.history.wall_seconds,
    });
    std::fs::write(run.file("report.json"), serde_json::to_string_pretty(&report_json)?)?;
    let path = run.finish("train", &s, seed, serde_json::json!({ "config_hash": config.hash() }))?;
    println!(
        "best epoch {} (val {}), test loss {} ± {}, L2(b) {}, L2(sigma) {}; wrote {}",
        outcome.history.best_epoch,
        f64_17(outcome.history.best_val_loss),
        f64_17(report.loss_mean),
        f64_17(report.loss_std),
        f64_17(report.recovery.l2_drift),
        f64_17(report.recovery.l2_diffusion),
        path.display()
    );
    Ok(())
}

const EVALUATE_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("checkpoint", ""),
    ("out", ""),
    ("seed", "0"),
    ("noise_mode", ""),
    ("eval_points", "4096"),
    ("radius", ""),
];

pub fn evaluate(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(EVALUATE_KEYS, args)?;
    let seed: u64 = s.get("seed")?;
    let out = s.required("out")?.to_string();
    let cp_path = s.required("checkpoint")?;
    let checkpoint = Checkpoint::load(Path::new(cp_path))
        .map_err(|e| CliError::Runtime(format!("cannot load checkpoint `{cp_path}`: {e}")))?;
    let dataset = load_dataset(&s)?;
    let truth = field_for(&dataset.config.field)?;
    let mode = if s.raw("noise_mode").is_empty() { checkpoint.config.noise_mode } else { noise_mode(&s, "noise_mode")? };
    let eval = EvalConfig {
        alpha: checkpoint.alpha,
        noise_mode: mode,
        hurst: checkpoint.hurst,
        eval_points: s.get("eval_points")?,
        eval_seed: fracsde::rng::derive_seed(seed, "eval-points", 0),
        radius: s.optional("radius")?,
    };
    let mut run = RunDir::create(&out)?;
    let report = evaluate_model(&checkpoint.field, &truth, &dataset, &eval)?;
    let json = serde_json::to_value(&report)?;
    std::fs::write(run.file("report.json"), serde_json::to_string_pretty(&json)?)?;
    run.finish("evaluate", &s, seed, serde_json::json!({ "checkpoint_config_hash": checkpoint.config_hash }))?;
    println!("{}", serde_json::to_string(&json)?);
    Ok(())
}

/// Appends finished rows to the partial CSV so an aborted sweep keeps them.
fn row_sink(path: std::path::PathBuf) -> CliResult<impl FnMut(&SweepRow) -> fracsde::Result<()>> {
    std::fs::write(&path, "control,mean,std,n\n")?;
    Ok(move |r: &SweepRow| {
        let mut f = OpenOptions::new().append(true).open(&path)?;
        writeln!(f, "{},{},{},{}", f64_17(r.control), f64_17(r.mean), f64_17(r.std), r.n)?;
        eprintln!("control {}: mean {:.6e} std {:.3e} n {}", r.control, r.mean, r.std, r.n);
        Ok(())
    })
}

fn finish_sweep(mut run: RunDir, table: fracsde::experiments::SweepTable, command: &str, s: &Settings, seed: u64) -> CliResult<()> {
    std::fs::remove_file(run.dir().join("rows.partial.csv"))?;
    for p in table.write(run.dir())? {
        run.record(&p);
    }
    let summary = serde_json::json!({ "slope": table.slope, "slope_ref": table.slope_ref, "dropped": table.dropped });
    let path = run.finish(command, s, seed, summary)?;
    println!("slope {} (reference {}); wrote {}", f64_17(table.slope), f64_17(table.slope_ref), path.display());
    Ok(())
}

const WIDTH_KEYS: &[(&str, &str)] = &[
    ("out", ""),
    ("seed", "0"),
    ("widths", "8,16,32,64,128"),
    ("replicas", "3"),
    ("hurst", "0.7"),
    ("n_train", "100"),
    ("n_val", "28"),
    ("n_test", "32"),
    ("lr", "0.001"),
    ("weight_decay", "0.0001"),
    ("clip", "5"),
    ("max_epochs", "500"),
    ("patience", "20"),
    ("group_size", "10"),
];

pub fn sweep_width(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(WIDTH_KEYS, args)?;
    let seed: u64 = s.get("seed")?;
    let config = WidthSweepConfig {
        dataset: DatasetConfig {
            hurst: s.get("hurst")?,
            n_train: s.get("n_train")?,
            n_val: s.get("n_val")?,
            n_test: s.get("n_test")?,
            ..DatasetConfig::default()
        },
        train: TrainConfig {
            adam: adam(&s)?,
            clip: s.get("clip")?,
            max_epochs: s.get("max_epochs")?,
            patience: s.get("patience")?,
            group_size: s.get("group_size")?,
            ..TrainConfig::default()
        },
        replicas: s.get("replicas")?,
        seed,
    };
    let widths: Vec<usize> = s.list("widths")?;
    let out = s.required("out")?.to_string();
    let run = RunDir::create(&out)?;
    let sink = row_sink(run.dir().join("rows.partial.csv"))?;
    let table = width_sweep(&widths, &config, sink)?;
    finish_sweep(run, table, "sweep-width", &s, seed)
}

const FITTING_KEYS: &[(&str, &str)] = &[
    ("out", ""),
    ("seed", "0"),
    ("ms", "250,500,1000,2000,4000"),
    ("replicas", "200"),
    ("hurst", "0.7"),
    ("horizon", "1"),
    ("k", "4"),
    ("alpha", ""),
    ("mvn_horizon", "50"),
    ("mvn_refine", "1"),
    ("gamma", "0.51"),
    ("true_hurst", "false"),
];

pub fn sweep_fitting(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(FITTING_KEYS, args)?;
    let seed: u64 = s.get("seed")?;
    let config = FittingSweepConfig {
        hurst: s.get("hurst")?,
        horizon: s.get("horizon")?,
        k: s.get("k")?,
        replicas: s.get("replicas")?,
        alpha: s.optional("alpha")?,
        mvn: MvnConfig { horizon_factor: s.get("mvn_horizon")?, refine: s.get("mvn_refine")?, ..MvnConfig::default() },
        gamma: s.get("gamma")?,
        true_hurst: s.bool("true_hurst")?,
        seed,
        ..FittingSweepConfig::default()
    };
    config.mvn.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let ms: Vec<usize> = s.list("ms")?;
    let out = s.required("out")?.to_string();
    let run = RunDir::create(&out)?;
    let sink = row_sink(run.dir().join("rows.partial.csv"))?;
    let table = fitting_sweep(&ms, &config, sink)?;
    finish_sweep(run, table, "sweep-fitting", &s, seed)
}

const TIME_KEYS: &[(&str, &str)] = &[
    ("out", ""),
    ("seed", "0"),
    ("dts", "0.003125,0.00625,0.0125,0.025,0.05"),
    ("replicas", "200"),
    ("hurst", "0.7"),
    ("horizon", "1"),
    ("coarse_dt", "0.05"),
    ("reference_factor", "8"),
    ("alpha", ""),
    ("zero_diffusion", "false"),
];

pub fn sweep_time(args: &[String]) -> CliResult<()> {
    let s = Settings::parse(TIME_KEYS, args)?;
    let seed: u64 = s.get("seed")?;
    let config = TimeSweepConfig {
        hurst: s.get("hurst")?,
        horizon: s.get("horizon")?,
        coarse_dt: s.get("coarse_dt")?,
        reference_factor: s.get("reference_factor")?,
        replicas: s.get("replicas")?,
        alpha: s.optional("alpha")?,
        zero_diffusion: s.bool("zero_diffusion")?,
        seed,
        ..TimeSweepConfig::default()
    };
    let mut dts: Vec<f64> = s.list("dts")?;
    dts.sort_by(f64::total_cmp);
    let out = s.required("out")?.to_string();
    let run = RunDir::create(&out)?;
    let sink = row_sink(run.dir().join("rows.partial.csv"))?;
    let table = time_sweep(&dts, &config, sink)?;
    finish_sweep(run, table, "sweep-time", &s, seed)
}
