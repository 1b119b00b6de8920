use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myotransfer")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", p(dir)];
    args.extend_from_slice(extra);
    for (flag, v) in [("--subjects", "3"), ("--classes", "4"), ("--channels", "6")] {
        if !extra.contains(&flag) {
            args.extend([flag, v]);
        }
    }
    ok(&args);
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, &["--seed", "4", "--subjects", "4"]);
    synth(&b, &["--seed", "4", "--subjects", "4"]);
    let (fa, fb) = (sorted_files(&a), sorted_files(&b));
    assert_eq!(fa, fb);
    let manifest = json(&a.join("cohort.json"));
    assert_eq!(manifest["recordings"].as_array().unwrap().len(), 4);

    let c = t.path().join("c");
    synth(&c, &["--seed", "5", "--subjects", "4"]);
    assert_ne!(fa, sorted_files(&c));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = bin(&["synth", "--subjects", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out-dir"));
}

#[test]
fn bad_values_exit_with_one() {
    let t = tempfile::tempdir().unwrap();
    let rec = t.path().join("rec");
    synth(&rec, &[]);
    let out_dir = t.path().join("out");
    for sizes in ["80,40", "0:10:5"] {
        let out = bin(&["run", "--input", p(&rec), "--out-dir", p(&out_dir), "--sizes", sizes]);
        assert_eq!(out.status.code(), Some(1), "{sizes}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let out = bin(&["run", "--input", p(&t.path().join("nothing")), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn features_have_expected_shape() {
    let t = tempfile::tempdir().unwrap();
    let rec = t.path().join("rec");
    synth(&rec, &[]);
    let (c1, c2, avg) = (t.path().join("c1"), t.path().join("c2"), t.path().join("avg"));
    ok(&["features", "--input", p(&rec), "--out-dir", p(&c1)]);
    ok(&["features", "--input", p(&rec), "--out-dir", p(&c2)]);
    ok(&["features", "--input", p(&rec), "--out-dir", p(&avg), "--feature-mode", "averaged"]);
    assert_eq!(sorted_files(&c1), sorted_files(&c2));

    let manifest = json(&c1.join("features.json"));
    let subjects = manifest["subjects"].as_array().unwrap();
    assert_eq!(subjects.len(), 3);
    for s in subjects {
        for (file, count) in [("train", "train_vectors"), ("test", "test_vectors")] {
            let mut r = csv::Reader::from_path(c1.join(s[file].as_str().unwrap())).unwrap();
            let rows = r.records().count();
            assert_eq!(rows as u64, s[count].as_u64().unwrap());
            assert!(rows > 0);
        }
    }
    let header = |d: &Path| csv::Reader::from_path(d.join("S01_train.csv")).unwrap().headers().unwrap().len();
    // one label column plus the features
    assert_eq!(header(&c1), 3 * 6 + 1);
    assert_eq!(header(&avg), 6 + 1);
}

#[test]
fn no_transfer_run_trains_no_sources() {
    let t = tempfile::tempdir().unwrap();
    let rec = t.path().join("rec");
    synth(&rec, &[]);
    let out = t.path().join("out");
    let start = Instant::now();
    let stdout = ok(&["run", "--input", p(&rec), "--out-dir", p(&out), "--methods", "NoTransfer", "--sizes", "40,80"]);
    assert!(start.elapsed().as_secs() < 60);
    assert!(stdout.contains("NoTransfer"));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["source_models_trained"], 0);
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
    }
}

#[test]
fn runs_are_reproducible_across_job_counts() {
    let t = tempfile::tempdir().unwrap();
    let rec = t.path().join("rec");
    synth(&rec, &[]);
    let mut csvs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = t.path().join(name);
        ok(&[
            "run", "--input", p(&rec), "--out-dir", p(&out), "--sizes", "40,80", "--seeds", "0..2",
            "--methods", "NoTransfer,PriorFeatures,MA", "--source-samples", "150", "--jobs", jobs,
        ]);
        let files: Vec<_> = sorted_files(&out).into_iter().filter(|(n, _)| n.ends_with(".csv")).collect();
        assert!(!files.is_empty());
        csvs.push(files);
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn flags_override_config_file() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cohort.json");
    std::fs::write(&cfg, r#"{"subjects": 2, "num_classes": 3, "channels": 5}"#).unwrap();
    let rec = t.path().join("rec");
    ok(&["synth", "--out-dir", p(&rec), "--config", p(&cfg), "--channels", "7"]);
    let m = json(&rec.join("cohort.json"));
    assert_eq!(m["config"]["subjects"], 2);
    assert_eq!(m["config"]["num_classes"], 3);
    assert_eq!(m["config"]["channels"], 7);

    let run_cfg = t.path().join("run.json");
    std::fs::write(&run_cfg, r#"{"methods": ["NoTransfer"], "sizes": [30, 60], "seeds": [3]}"#).unwrap();
    let out = t.path().join("out");
    ok(&["run", "--input", p(&rec), "--out-dir", p(&out), "--config", p(&run_cfg), "--sizes", "45"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["sizes"], serde_json::json!([45]));
    assert_eq!(m["config"]["seeds"], serde_json::json!([3]));
    assert_eq!(m["config"]["methods"], serde_json::json!(["NoTransfer"]));
}

#[test]
fn analyze_compares_runs() {
    let t = tempfile::tempdir().unwrap();
    let (r4, r5) = (t.path().join("r4"), t.path().join("r5"));
    synth(&r4, &["--seed", "1"]);
    synth(&r5, &["--seed", "2", "--classes", "5"]);
    let run = |rec: &Path, out: &Path, seed: &str| {
        ok(&[
            "run", "--input", p(rec), "--out-dir", p(out), "--sizes", "60", "--methods", "NoTransfer,MA",
            "--source-samples", "150", "--base-seed", seed,
        ]);
    };
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    run(&r4, &a, "1");
    run(&r4, &b, "2");
    run(&r5, &c, "1");

    let out = t.path().join("cmp");
    let stdout = ok(&[
        "analyze", "--run", &format!("first={}", p(&a)), "--run", &format!("second={}", p(&b)), "--size", "60",
        "--out-dir", p(&out),
    ]);
    assert!(stdout.contains("correlation.csv"));
    assert!(out.join("correlation.csv").is_file());
    assert!(out.join("comparison.csv").is_file());

    let bad = bin(&[
        "analyze", "--run", &format!("first={}", p(&a)), "--run", &format!("other={}", p(&c)), "--size", "60",
        "--out-dir", p(&t.path().join("bad")),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = bin(&["analyze", "--run", p(&a), "--size", "60", "--out-dir", p(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}
