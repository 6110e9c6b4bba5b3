use std::path::{Path, PathBuf};
use std::process::Command;

use hgdagger::cli::{FAILED_MARKER, MANIFEST_FILE};
use hgdagger::ensemble::Ensemble;
use hgdagger::evaluation::InitializationRegion;
use hgdagger::rng::{derive_seed, stream_rng};
use hgdagger::sim::{generate_scenario, observe};
use serde_json::Value;

const SMALL: &str = "\
road_length = 200.0
bc_labels = 300
labels_per_epoch = 150
epochs = 2
max_rollouts = 3
epochs_per_fit = 5
ensemble_size = 2
hidden = \"16\"
eval_scenarios = 2
permitted_scenarios = 2
permitted_inits = 4
horizon = 4.0
sweep_scenarios = 2
sweep_points = 5
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hgdagger"))
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.conf");
    std::fs::write(&path, SMALL).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn unknown_flag_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["train-bc", "--bogus", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!out_dir.exists());
    let out = bin().arg("train-everything").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn malformed_config_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "epochs = 2\nnot_a_key = 3\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = bin().args(["train-bc", "--config"]).arg(&conf).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!out_dir.exists());
}

#[test]
fn artifact_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let out = bin()
        .env("HGDAGGER_ARTIFACTS", dir.path().join("root"))
        .args(["train-bc", "--seed", "3", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert!(out.status.success());
    let run = dir.path().join("root").join("train-bc-seed3");
    let m = manifest(&run);
    assert_eq!(m["command"], "train-bc");
    assert_eq!(m["config"]["bc_labels"], 300);
    assert_eq!(m["config"]["seed"], 3);
    assert!(m["artifacts"]["bc.ckpt"].as_str().unwrap().starts_with("sha256:"));
    assert!(run.join("dataset.txt").exists());
}

#[test]
fn failure_mid_run_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let train = dir.path().join("bc");
    run_ok(&["train-bc", "--config", conf.to_str().unwrap(), "--out", train.to_str().unwrap()]);
    // No tau.txt sits beside a BC checkpoint.
    let out_dir = dir.path().join("map");
    let out = bin()
        .args(["risk-map", "--checkpoint"])
        .arg(train.join("bc.ckpt"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out_dir.join(FAILED_MARKER).exists());
    assert!(out_dir.join(MANIFEST_FILE).exists());
}

#[test]
fn train_dagger_logs_beta_trace() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let out = dir.path().join("dagger");
    run_ok(&["train-dagger", "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    let betas: Vec<f64> = m["beta_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(betas.len(), 2);
    assert!((betas[0] - 0.85).abs() < 1e-12 && (betas[1] - 0.7225).abs() < 1e-12);
    assert!(out.join("epoch_2.ckpt").exists());
}

#[test]
fn eval_rates_recount_from_episode_records() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let train = dir.path().join("bc");
    run_ok(&["train-bc", "--config", conf.to_str().unwrap(), "--out", train.to_str().unwrap()]);
    let out = dir.path().join("eval");
    let ckpt = train.join("bc.ckpt");
    run_ok(&[
        "eval",
        "--config",
        conf.to_str().unwrap(),
        "--eval_scenarios",
        "8",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let metrics = records(&out.join("metrics.jsonl"));
    let episodes = records(&out.join("episodes.jsonl"));
    assert_eq!(metrics.len(), 2);
    for m in &metrics {
        let policy = m["policy"].as_str().unwrap();
        let mine: Vec<&Value> = episodes.iter().filter(|e| e["policy"] == policy).collect();
        assert_eq!(mine.len(), 8);
        let meters: f64 = mine.iter().map(|e| e["meters"].as_f64().unwrap()).sum();
        let count = |kind: &str| {
            mine.iter()
                .flat_map(|e| e["events"].as_array().unwrap())
                .filter(|ev| ev["kind"] == kind)
                .count()
        };
        let (c, d) = (count("collision"), count("road_departure"));
        assert_eq!(m["collisions"].as_u64().unwrap() as usize, c);
        assert_eq!(m["departures"].as_u64().unwrap() as usize, d);
        assert!((m["collision_rate"].as_f64().unwrap() - c as f64 / meters).abs() < 1e-12);
        assert!((m["departure_rate"].as_f64().unwrap() - d as f64 / meters).abs() < 1e-12);
    }
    assert_eq!(metrics[0]["policy"], "expert");
    assert!(metrics[0]["bhattacharyya_to_expert"].as_f64().unwrap() < 1e-12);
}

/// Median doubt over region draws, so both permitted-set groups fill.
fn median_doubt(ckpt: &Path) -> f64 {
    let ens = Ensemble::load(ckpt).unwrap();
    let sc = generate_scenario(derive_seed(200_000, 0), 200.0).unwrap();
    let region = InitializationRegion::default();
    let mut rng = stream_rng(1, 1);
    let mut d: Vec<f64> = (0..400)
        .filter_map(|_| region.sample(&sc, &mut rng))
        .map(|s| ens.doubt(&observe(&s, &sc).unwrap()).unwrap())
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

#[test]
fn analysis_commands_write_records() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let c = conf.to_str().unwrap();
    let train = dir.path().join("bc");
    run_ok(&["train-bc", "--config", c, "--out", train.to_str().unwrap()]);
    let ckpt = train.join("bc.ckpt");
    let tau = median_doubt(&ckpt).to_string();
    let k = ckpt.to_str().unwrap();

    let out = dir.path().join("ps");
    run_ok(&["permitted-set", "--config", c, "--checkpoint", k, "--tau", &tau, "--out", out.to_str().unwrap()]);
    let groups = records(&out.join("permitted_set.jsonl"));
    assert_eq!(groups.len(), 2);
    assert!(groups.iter().all(|g| g["initializations"] == 4));
    let inits = records(&out.join("initializations.jsonl"));
    let t: f64 = tau.parse().unwrap();
    for i in &inits {
        let inside = i["doubt"].as_f64().unwrap() <= t;
        assert_eq!(inside, i["group"] == "inside");
    }

    let out = dir.path().join("map");
    run_ok(&["risk-map", "--config", c, "--checkpoint", k, "--tau", &tau, "--out", out.to_str().unwrap()]);
    let ppm = std::fs::read(out.join("risk_map.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n"));
    let cells = records(&out.join("risk_map.jsonl"));
    assert!(cells.iter().all(|c| (c["doubt"].as_f64().unwrap() <= t) == c["permitted"].as_bool().unwrap()));

    let out = dir.path().join("sweep");
    run_ok(&["sweep-thresholds", "--config", c, "--checkpoint", k, "--tau", &tau, "--out", out.to_str().unwrap()]);
    let sweep = records(&out.join("sweep.jsonl"));
    assert_eq!(sweep.len(), 6);
    assert_eq!(sweep[5]["kind"], "learned_tau");
    assert!((manifest(&out)["tau"].as_f64().unwrap() - t).abs() <= 1e-12 * t);

    let out = dir.path().join("cmp");
    run_ok(&["compare", "--config", c, "--checkpoint", k, "--out", out.to_str().unwrap()]);
    let cmp = records(&out.join("compare.jsonl"));
    assert_eq!(cmp.len(), 2);
    assert!(cmp[1]["bhattacharyya"].as_f64().unwrap() >= 0.0);
    assert!(manifest(&out)["record_schemas"]["compare.jsonl"].is_string());
}

#[test]
fn train_hg_reuses_a_given_initial_policy() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let c = conf.to_str().unwrap();
    let train = dir.path().join("bc");
    run_ok(&["train-bc", "--config", c, "--out", train.to_str().unwrap()]);
    let out = dir.path().join("hg");
    run_ok(&[
        "train-hg",
        "--config",
        c,
        "--init",
        train.join("bc.ckpt").to_str().unwrap(),
        "--bc_dataset",
        train.join("dataset.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!out.join("bc.ckpt").exists());
    let m = manifest(&out);
    assert_eq!(m["inputs"].as_object().unwrap().len(), 2);
    assert!(out.join("interventions.txt").exists());
    let bc = std::fs::read_to_string(train.join("dataset.txt")).unwrap();
    let hg = std::fs::read_to_string(out.join("dataset.txt")).unwrap();
    assert!(hg.starts_with(&bc));
}
