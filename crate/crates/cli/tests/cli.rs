use std::path::Path;
use std::process::{Command, Output};

fn swingnet(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swingnet"))
        .arg("--root")
        .arg(root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The single file with extension `ext` in `dir`.
fn only_file(dir: &Path, ext: &str) -> std::path::PathBuf {
    let found: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    assert_eq!(found.len(), 1, "{found:?}");
    found[0].clone()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_a_twenty_second_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = swingnet(dir.path(), &["simulate", "--disturbance", "6.09", "--out", "traj"]);
    ok(&out);
    let rows = read_csv(&only_file(&dir.path().join("traj"), "csv"));
    assert_eq!(rows[0][0], "t");
    assert_eq!(rows[0].len(), 1 + 15);
    assert_eq!(rows.last().unwrap()[0], "20");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(only_file(&dir.path().join("traj"), "json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["wall_time_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_disturbance_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    ok(&swingnet(dir.path(), &["simulate", "--disturbance", "0", "--out", "t"]));
    let rows = read_csv(&only_file(&dir.path().join("t"), "csv"));
    let first: Vec<f64> = rows[1][1..].iter().map(|v| v.parse().unwrap()).collect();
    for r in &rows[2..] {
        for (v, f) in r[1..].iter().zip(&first) {
            let v: f64 = v.parse().unwrap();
            assert!((v - f).abs() <= 1e-9, "{v} vs {f}");
        }
    }
}

#[test]
fn bad_case_path_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = swingnet(dir.path(), &["simulate", "--case", "missing.case", "--disturbance", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.case"));
    let out = swingnet(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_case_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("weak.case"),
        "[BUS]\n1 G 1.0 50.0\n2 L 1.0 -50.0\n[BRANCH]\n1 2 0.0 0.5 0.0\n[PARAM]\nname weak\nomega0 376.99111843077515\nbase_mva 100\nh 5.0\ngen_damping 0.05\nload_damping 1.0\ndisturbance_bus 2\n",
    )
    .unwrap();
    let out = swingnet(dir.path(), &["simulate", "--case", "weak.case", "--disturbance", "1"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_data_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate-data", "--scenario", "A", "--out", "d"];
    ok(&swingnet(dir.path(), &args));
    let mpath = dir.path().join("d/kundur11/eps1e-10/A.json");
    let m1: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
    assert_eq!(m1["row_count"], 66);
    assert!(m1["wall_time_s"].as_f64().unwrap() > 0.0);
    let csv1 = std::fs::read(dir.path().join("d/kundur11/eps1e-10/A.csv")).unwrap();
    ok(&swingnet(dir.path(), &args));
    let m2: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
    assert_eq!(m1["content_hash"], m2["content_hash"]);
    assert_eq!(csv1, std::fs::read(dir.path().join("d/kundur11/eps1e-10/A.csv")).unwrap());
    assert!(dir.path().join("d/kundur11/eps1e-10/A-validation.json").exists());
}

const SMALL: &str = "[hyperparameters]\nhidden_layers = 2\nneurons = 8\nmax_epochs = 3\n";

fn write_config(root: &Path, name: &str, head: &str, tail: &str) {
    std::fs::write(root.join(name), format!("{head}\n{tail}")).unwrap();
}

#[test]
fn vanilla_config_with_derivative_weight_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "bad.toml",
        "scenario = \"A\"\nflavour = \"vanilla\"",
        "[hyperparameters]\nlambda_dt = 0.3\n",
    );
    let out = swingnet(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vanilla"));
}

#[test]
fn pinn_training_logs_the_fade_in_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "pinn.toml", "scenario = \"A\"\nflavour = \"pinn\"\nseeds = [4]", SMALL);
    ok(&swingnet(dir.path(), &["train", "--config", "pinn.toml"]));
    let run = dir.path().join("runs/pinn-A-seed4");
    assert!(run.join("model.swnn").exists());
    let rows = read_csv(&run.join("train_record.csv"));
    assert_eq!(rows[0][1], "lambda_f");
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let epoch: f64 = r[0].parse().unwrap();
        let logged: f64 = r[1].parse().unwrap();
        let expect = (0.005 * 10f64.powf(epoch / 15.0)).min(0.5);
        assert!((logged - expect).abs() <= 1e-15 * expect, "{logged} vs {expect}");
    }

    let out = swingnet(
        dir.path(),
        &["evaluate", "--model", "runs/pinn-A-seed4/model.swnn", "--scenario", "A", "--out", "rep"],
    );
    ok(&out);
    let acc = read_csv(&dir.path().join("rep/accuracy.csv"));
    assert_eq!(acc[0], ["model", "scenario", "seed", "max_ae_delta", "max_ae_domega"]);
    assert_eq!(acc[1][0], "pinn-A-seed4");
    assert_eq!(acc[1][2], "4");
    let dist = read_csv(&dir.path().join("rep/pinn-A-seed4/distribution.csv"));
    // 11 time values and 6 magnitudes
    assert_eq!(dist.len(), 1 + 11 + 6);

    let out = swingnet(
        dir.path(),
        &[
            "benchmark",
            "--model",
            "runs/pinn-A-seed4/model.swnn",
            "--tolerances",
            "1e-3",
            "--times",
            "1,5",
            "--out",
            "bench",
        ],
    );
    ok(&out);
    let timing = read_csv(&dir.path().join("bench/timing.csv"));
    assert_eq!(timing.len(), 1 + 4);
    let cost = read_csv(&dir.path().join("bench/cost.csv"));
    assert_eq!(cost.len(), 2);
    let upfront: f64 = cost[1][2].parse().unwrap();
    assert!(upfront > 0.0);
}

#[test]
fn seed_matrix_trains_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "m.toml",
        "scenario = \"A\"\nflavour = \"vanilla\"\noutput_dir = \"matrix\"",
        "[hyperparameters]\nhidden_layers = 1\nneurons = 4\nmax_epochs = 1\n",
    );
    ok(&swingnet(dir.path(), &["seed-matrix", "--config", "m.toml", "--seeds", "0..20", "--workers", "2"]));
    let models = (0..20)
        .filter(|s| dir.path().join(format!("matrix/vanilla-A-seed{s}/model.swnn")).exists())
        .count();
    assert_eq!(models, 20);
}

#[test]
fn reruns_reproduce_non_timing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "d.toml", "scenario = \"A\"\nflavour = \"dtnn\"", SMALL);
    let grab = |root: &Path| {
        let run = root.join("runs/dtnn-A-seed0");
        (
            std::fs::read(run.join("model.swnn")).unwrap(),
            std::fs::read(run.join("train_record.csv")).unwrap(),
            std::fs::read(run.join("train_summary.json")).unwrap(),
        )
    };
    ok(&swingnet(dir.path(), &["train", "--config", "d.toml"]));
    let first = grab(dir.path());
    std::fs::remove_dir_all(dir.path().join("runs")).unwrap();
    ok(&swingnet(dir.path(), &["train", "--config", "d.toml"]));
    assert!(first == grab(dir.path()));
}
