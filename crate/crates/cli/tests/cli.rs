use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsde")).args(args).output().expect("binary runs")
}

fn arg(key: &str, path: &Path) -> String {
    format!("{key}={}", path.display())
}

fn count_files(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().count()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_key_exits_with_config_error() {
    let out = run(&["simulate", "foo=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`foo`"));
}

#[test]
fn unknown_command_exits_with_config_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn invalid_value_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", &arg("out", &tmp.path().join("d")), "hurst=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("d").exists());
    assert!(!tmp.path().join("d.partial").exists());
}

#[test]
fn simulate_writes_default_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    let out = run(&["simulate", &arg("out", &dir), "seed=3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(count_files(&dir.join("trajectories")), 160);
    assert_eq!(count_files(&dir.join("observations")), 160);
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["config"]["seed"], 3);

    let again = run(&["simulate", &arg("out", &dir)]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let out = run(&["simulate", &arg("out", d), "n_train=4", "n_val=2", "n_test=2", "seed=11"]);
        assert!(out.status.success());
    }
    for name in ["traj_000.csv", "traj_007.csv"] {
        let x = std::fs::read(a.join("trajectories").join(name)).unwrap();
        let y = std::fs::read(b.join("trajectories").join(name)).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn estimate_hurst_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    assert!(run(&["simulate", &arg("out", &dir), "n_train=20", "n_val=2", "n_test=2"]).status.success());
    let out = run(&["estimate-hurst", &arg("data", &dir)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let h = v["hurst"].as_f64().unwrap();
    assert!(h > 0.5 && h < 1.0);
    assert_eq!(v["n"], 20 * 21);

    let csv = tmp.path().join("series.csv");
    let body: String = (0..200).map(|i| format!("{}\n", (i * i) as f64 * 1e-4)).collect();
    std::fs::write(&csv, format!("x_1\n{body}")).unwrap();
    let hout = tmp.path().join("h");
    let out = run(&["estimate-hurst", &arg("input", &csv), &arg("out", &hout)]);
    assert!(out.status.success());
    assert_eq!(json(&hout.join("hurst.json"))["hurst"], 0.99);

    let both = run(&["estimate-hurst", &arg("input", &csv), &arg("data", &dir)]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn train_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let sim = run(&["simulate", &arg("out", &data), "n_train=6", "n_val=3", "n_test=3", "seed=1"]);
    assert!(sim.status.success());
    let model = tmp.path().join("model");
    let out = run(&[
        "train",
        &arg("data", &data),
        &arg("out", &model),
        "width=8",
        "max_epochs=3",
        "group_size=3",
        "eval_points=64",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["checkpoint.json", "history.csv", "report.json", "manifest.json"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(model.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(history.lines().count(), 5);

    let eval = tmp.path().join("eval");
    let out = run(&[
        "evaluate",
        &arg("data", &data),
        &arg("checkpoint", &model.join("checkpoint.json")),
        &arg("out", &eval),
        "eval_points=64",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&eval.join("report.json"));
    let b = json(&model.join("report.json"));
    assert_eq!(a["loss_mean"], b["evaluation"]["loss_mean"]);
    assert_eq!(a["n"], 3);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.cfg");
    std::fs::write(&cfg, "n_train = 2\nn_val = 1\nn_test = 1\nseed = 5\n").unwrap();
    let dir = tmp.path().join("data");
    let out = run(&["simulate", &arg("config", &cfg), "n_test=2", &arg("out", &dir)]);
    assert!(out.status.success());
    assert_eq!(count_files(&dir.join("trajectories")), 5);
}

#[test]
fn sweeps_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = tmp.path().join("fit");
    let out = run(&["sweep-fitting", &arg("out", &fit), "ms=64,128", "replicas=4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fit.join("sweep_fitting.csv").exists());
    assert!(!fit.join("rows.partial.csv").exists());
    let table = json(&fit.join("sweep_fitting.json"));
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);

    let time = tmp.path().join("time");
    let out = run(&["sweep-time", &arg("out", &time), "dts=0.025,0.05", "replicas=3", "zero_diffusion=true"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(time.join("sweep_time_control.csv").exists());

    let width = tmp.path().join("width");
    let out = run(&[
        "sweep-width",
        &arg("out", &width),
        "widths=2,4",
        "replicas=1",
        "n_train=4",
        "n_val=2",
        "n_test=2",
        "max_epochs=2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&width.join("manifest.json"));
    assert_eq!(manifest["command"], "sweep-width");
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
