use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvc"))
        .args(args)
        .env_remove("MVC_SEED")
        .output()
        .expect("failed to spawn mvc")
}

fn ok(args: &[&str]) -> String {
    let out = mvc(args);
    assert!(
        out.status.success(),
        "mvc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, lesions: &str, seed: &str) {
    ok(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--lesions-per-class",
        lesions,
        "--seed",
        seed,
    ]);
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![(
        "manifest.csv".to_string(),
        fs::read(dir.join("manifest.csv")).unwrap(),
    )];
    let mut features: Vec<_> = fs::read_dir(dir.join("features"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    features.sort();
    for p in features {
        out.push((
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        ));
    }
    out
}

#[test]
fn gen_data_writes_requested_lesions_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen(&a, "100", "7");
    gen(&b, "100", "7");
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    let mut ids: Vec<&str> = manifest
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    ids.dedup();
    assert_eq!(ids.len(), 200);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
    assert!(a.join("run_manifest.json").exists());

    let c = tmp.path().join("c");
    gen(&c, "100", "8");
    assert_ne!(tree_bytes(&a), tree_bytes(&c));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mvc(&["gen-data"]).status.code(), Some(2));
    assert_eq!(mvc(&["crossval"]).status.code(), Some(2));
    assert_eq!(
        mvc(&["ablate", "--data", "x", "--axis", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mvc(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    gen(&data, "6", "0");
    let d = data.to_str().unwrap();
    assert_eq!(
        mvc(&["crossval", "--data", d, "--folds", "1"])
            .status
            .code(),
        Some(1)
    );
    let missing = tmp.path().join("missing.json");
    let out = mvc(&[
        "knn-probe",
        "--model",
        missing.to_str().unwrap(),
        "--data",
        d,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    let nodata = tmp.path().join("nowhere");
    assert_eq!(
        mvc(&["crossval", "--data", nodata.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mvc(&["crossval", "--data", d, "--variant", "XYZ"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn crossval_writes_one_run_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    gen(&data, "10", "1");
    let out = tmp.path().join("cv");
    let stdout = ok(&[
        "crossval",
        "--data",
        data.to_str().unwrap(),
        "--variant",
        "baseline,LR",
        "--folds",
        "2",
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("Baseline") && stdout.contains("LR"));
    for m in ["baseline", "lr"] {
        let dir = out.join("runs").join(m);
        for f in [
            "run.json",
            "run.txt",
            "fold_0.json",
            "fold_1.json",
            "knn.csv",
        ] {
            assert!(dir.join(f).exists(), "{m}/{f} missing");
        }
    }
    let table: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(table["table"]["rows"].as_array().unwrap().len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "crossval");
    assert_eq!(manifest["config"]["folds"], 2);
    assert!(manifest["dataset_fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn ablate_rows_follow_the_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    gen(&data, "8", "2");
    let d = data.to_str().unwrap();
    let rows = |out: &Path| -> Vec<String> {
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("comparison.json")).unwrap()).unwrap();
        v["table"]["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["label"].as_str().unwrap().to_string())
            .collect()
    };
    let neg = tmp.path().join("neg");
    ok(&[
        "ablate",
        "--data",
        d,
        "--axis",
        "negatives",
        "--folds",
        "2",
        "--epochs",
        "1",
        "--out",
        neg.to_str().unwrap(),
    ]);
    assert_eq!(rows(&neg), ["LR(-)", "LR(-SC)", "LR(-DC)", "LR"]);
    let alpha = tmp.path().join("alpha");
    ok(&[
        "ablate",
        "--data",
        d,
        "--axis",
        "alpha",
        "--alphas",
        "0.1,1",
        "--folds",
        "2",
        "--epochs",
        "1",
        "--out",
        alpha.to_str().unwrap(),
    ]);
    assert_eq!(rows(&alpha).len(), 2);
}

#[test]
fn knn_probe_on_training_data_with_k1_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    gen(&data, "10", "4");
    let model = tmp.path().join("m");
    let d = data.to_str().unwrap();
    ok(&[
        "train",
        "--data",
        d,
        "--epochs",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(model.join("loss_curve.csv").exists());
    let model_file = model.join("model.json");
    let csv = ok(&[
        "knn-probe",
        "--model",
        model_file.to_str().unwrap(),
        "--data",
        d,
        "--k",
        "1",
    ]);
    assert_eq!(csv.trim(), "k,auc\n1,1");
    let probe = tmp.path().join("probe");
    ok(&[
        "knn-probe",
        "--model",
        model_file.to_str().unwrap(),
        "--data",
        d,
        "--query-data",
        d,
        "--out",
        probe.to_str().unwrap(),
    ]);
    let written = fs::read_to_string(probe.join("knn.csv")).unwrap();
    assert!(written.starts_with("k,auc\n1,1\n"));
}

#[test]
fn flags_override_config_file_and_env_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("synth.conf");
    fs::write(&cfg, "# tiny\nlesions_per_class = 3\nseed = 5\n").unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    ok(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    ok(&[
        "gen-data",
        "--lesions-per-class",
        "3",
        "--seed",
        "5",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let out = Command::new(env!("CARGO_BIN_EXE_mvc"))
        .args([
            "gen-data",
            "--lesions-per-class",
            "3",
            "--out",
            c.to_str().unwrap(),
        ])
        .env("MVC_SEED", "5")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(tree_bytes(&b), tree_bytes(&c));

    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "not_a_key = 1\n").unwrap();
    let out = mvc(&[
        "gen-data",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
