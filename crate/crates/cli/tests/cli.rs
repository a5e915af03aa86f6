//! End-to-end runs of the `creditlens` binary on a small synthetic data set.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use creditlens::run::{sha256_hex, Manifest};
use serde_json::Value as Json;

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Setup {
    fn data(&self) -> Vec<String> {
        vec![
            "--data".into(),
            self.root.join("data/heloc.csv").display().to_string(),
            "--schema".into(),
            self.root.join("data/schema.json").display().to_string(),
        ]
    }

    fn path(&self, p: &str) -> String {
        self.root.join(p).display().to_string()
    }
}

fn creditlens(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_creditlens"))
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[String]) {
    let out = creditlens(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

/// Synthetic data plus a scorecard and a boosted model, built once.
fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let s = Setup { _dir: dir, root };
        ok(&args(&[
            "synth",
            "--rows",
            "2000",
            "--seed",
            "7",
            "--out",
            &s.path("data"),
            "--frozen-clock",
        ]));
        for (model, out) in [("scorecard", "card"), ("gbm", "gbm")] {
            let mut a = args(&["train", "--model", model, "--out", &s.path(out), "--frozen-clock"]);
            a.extend(s.data());
            if model == "gbm" {
                a.extend(args(&["--n-trees", "60", "--depth", "3", "--eta", "0.1"]));
            }
            ok(&a);
        }
        s
    })
}

fn read_json(path: impl AsRef<Path>) -> Json {
    let text = std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()));
    serde_json::from_str(&text).unwrap()
}

fn check_manifest(dir: &Path) -> Manifest {
    let m = Manifest::load(dir).unwrap();
    for a in &m.artifacts {
        let bytes = std::fs::read(dir.join(&a.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), a.sha256, "{}", a.path);
        assert_eq!(bytes.len() as u64, a.bytes);
    }
    m
}

#[test]
fn train_writes_scorecard_artifacts() {
    let s = setup();
    let dir = s.root.join("card");
    let m = check_manifest(&dir);
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    for f in [
        "bins.json",
        "fit_log.json",
        "model.json",
        "reference.csv",
        "schema.json",
        "scorecard.json",
    ] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
    }
    assert_eq!(m.command, "train");
    assert_eq!(m.created_unix, 0);
    let card = read_json(dir.join("scorecard.json"));
    assert_eq!(card["scaling"]["pdo"], 20.0);
    let log = read_json(dir.join("fit_log.json"));
    let trace = log["fit"]["ll_trace"].as_array().unwrap();
    assert!(trace.windows(2).all(|w| w[1].as_f64() >= w[0].as_f64()));
}

#[test]
fn training_is_byte_reproducible() {
    let s = setup();
    let out = s.root.join("card_again");
    let mut a = args(&[
        "train",
        "--model",
        "scorecard",
        "--out",
        &out.display().to_string(),
        "--frozen-clock",
    ]);
    a.extend(s.data());
    ok(&a);
    let first = Manifest::load(&s.root.join("card")).unwrap();
    let second = Manifest::load(&out).unwrap();
    assert_eq!(first.artifacts, second.artifacts);
}

#[test]
fn missing_or_invalid_schema_exits_2() {
    let s = setup();
    let out = creditlens(&args(&[
        "train",
        "--model",
        "scorecard",
        "--data",
        &s.path("data/heloc.csv"),
        "--out",
        &s.path("nope"),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--schema"));

    let out = creditlens(&args(&[
        "train",
        "--model",
        "scorecard",
        "--data",
        &s.path("data/heloc.csv"),
        "--schema",
        &s.path("data/absent.json"),
        "--out",
        &s.path("nope"),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn out_of_range_hyperparameter_exits_2() {
    let s = setup();
    let mut a = args(&[
        "train",
        "--model",
        "gbm",
        "--n-trees",
        "60000",
        "--out",
        &s.path("nope2"),
    ]);
    a.extend(s.data());
    let out = creditlens(&a);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_trees"));
}

#[test]
fn gbm_accepts_large_tree_counts() {
    let s = setup();
    let small = s.root.join("small");
    ok(&args(&[
        "synth",
        "--rows",
        "300",
        "--out",
        &small.display().to_string(),
    ]));
    let out = s.root.join("gbm_10000");
    ok(&args(&[
        "train",
        "--model",
        "gbm",
        "--n-trees",
        "10000",
        "--depth",
        "3",
        "--data",
        &small.join("heloc.csv").display().to_string(),
        "--schema",
        &small.join("schema.json").display().to_string(),
        "--out",
        &out.display().to_string(),
    ]));
    let model = read_json(out.join("model.json"));
    assert_eq!(model["kind"], "gbm");
    assert_eq!(model["config"]["n_trees"], 10000);
    assert_eq!(model["config"]["interaction_depth"], 3);
}

#[test]
fn evaluate_reports_each_model() {
    let s = setup();
    let constant = s.root.join("constant.json");
    std::fs::write(
        &constant,
        r#"{"format_version": 1, "kind": "constant", "name": "flat", "value": 0.4}"#,
    )
    .unwrap();
    let out = s.root.join("eval");
    let mut a = args(&[
        "evaluate",
        "--model",
        &s.path("card"),
        "--model",
        &s.path("gbm"),
        "--model",
        &constant.display().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    a.extend(s.data());
    ok(&a);
    check_manifest(&out);
    let reports = read_json(out.join("performance.json"));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        let gap = r["overfitting_gap"].as_f64().unwrap();
        let (train, test) = (r["train_loss"].as_f64().unwrap(), r["test_loss"].as_f64().unwrap());
        assert!((gap - (test - train)).abs() < 1e-15);
    }
    assert_eq!(reports[2]["model"], "flat");
    assert_eq!(reports[2]["train_performance"], 0.5);
    assert_eq!(reports[2]["test_performance"], 0.5);
    let scatter = std::fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 4);
    assert!(scatter.lines().next().unwrap().contains("overfitting_gap"));
}

#[test]
fn global_scorecard_importance_includes_points_range() {
    let s = setup();
    let out = s.root.join("global_card");
    let mut a = args(&[
        "explain",
        "--model",
        &s.path("card"),
        "--level",
        "global",
        "--top-k",
        "2",
        "--out",
        &out.display().to_string(),
    ]);
    a.extend(s.data());
    ok(&a);
    check_manifest(&out);
    let card = read_json(s.root.join("card/scorecard.json"));
    let ranges = read_json(out.join("points_range.json"));
    for r in ranges.as_array().unwrap() {
        let var = card["variables"]
            .as_array()
            .unwrap()
            .iter()
            .find(|v| v["name"] == r["variable"])
            .unwrap();
        let points: Vec<i64> = var["bins"]
            .as_array()
            .unwrap()
            .iter()
            .map(|b| b["points"].as_i64().unwrap())
            .collect();
        let expected = points.iter().max().unwrap() - points.iter().min().unwrap();
        assert_eq!(r["points_range"].as_i64().unwrap(), expected);
    }
    let fi = read_json(out.join("importance.json"));
    let imp: Vec<f64> = fi["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["importance"].as_f64().unwrap())
        .collect();
    assert!(imp.windows(2).all(|w| w[0] >= w[1]));
    let profiles = read_json(out.join("pd_profiles.json"));
    assert_eq!(profiles.as_array().unwrap().len(), 2);
    assert_eq!(profiles[0]["variable"], fi["entries"][0]["variable"]);
}

#[test]
fn local_explanation_is_complete() {
    let s = setup();
    for model in ["card", "gbm"] {
        let out = s.root.join(format!("local_{model}"));
        let mut a = args(&[
            "explain",
            "--model",
            &s.path(model),
            "--level",
            "local",
            "--obs",
            "17",
            "--n-paths",
            "5",
            "--out",
            &out.display().to_string(),
        ]);
        a.extend(s.data());
        ok(&a);
        check_manifest(&out);
        let pd = read_json(out.join("prediction.json"))["pd"].as_f64().unwrap();
        for file in ["breakdown.json", "shap.json"] {
            let attr = read_json(out.join(file));
            let sum: f64 = attr["contributions"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c["delta"].as_f64().unwrap())
                .sum();
            let base = attr["baseline"].as_f64().unwrap();
            assert!((base + sum - pd).abs() < 1e-10, "{model} {file}");
            assert_eq!(attr["observation"], "17");
        }
        let waterfall = std::fs::read_to_string(out.join("waterfall.csv")).unwrap();
        // header + 2 methods x (baseline, 3 variables, remainder, prediction)
        assert_eq!(waterfall.lines().count(), 13);
        assert!(waterfall.contains("all other variables"));
        let cp = read_json(out.join("cp_profiles.json"));
        assert_eq!(cp.as_array().unwrap().len(), 3);
    }
    let out = s.root.join("local_card");
    let deltas = read_json(out.join("scorecard_attribution.json"));
    let total = deltas["total"].as_f64().unwrap();
    let sum: f64 = deltas["contributions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["delta"].as_f64().unwrap())
        .sum();
    assert!((deltas["baseline"].as_f64().unwrap() + sum - total).abs() < 1e-9);
}

#[test]
fn local_explanation_is_byte_reproducible() {
    let s = setup();
    let run = |name: &str| {
        let out = s.root.join(name);
        let mut a = args(&[
            "explain",
            "--model",
            &s.path("gbm"),
            "--level",
            "local",
            "--obs",
            "3",
            "--n-paths",
            "4",
            "--out",
            &out.display().to_string(),
            "--frozen-clock",
        ]);
        a.extend(s.data());
        ok(&a);
        out
    };
    let (a, b) = (run("repro_a"), run("repro_b"));
    for entry in Manifest::load(&a).unwrap().artifacts {
        assert_eq!(
            std::fs::read(a.join(&entry.path)).unwrap(),
            std::fs::read(b.join(&entry.path)).unwrap(),
            "{}",
            entry.path
        );
    }
    let strip = |m: Manifest| (m.artifacts, m.created_unix, m.seed);
    assert_eq!(strip(Manifest::load(&a).unwrap()), strip(Manifest::load(&b).unwrap()));
}

#[test]
fn local_without_or_with_unknown_observation_exits_2() {
    let s = setup();
    let mut a = args(&[
        "explain",
        "--model",
        &s.path("card"),
        "--level",
        "local",
        "--out",
        &s.path("x"),
    ]);
    a.extend(s.data());
    let out = creditlens(&a);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--obs"));

    a.extend(args(&["--obs", "2000"]));
    let out = creditlens(&a);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown observation"));
}

#[test]
fn compare_with_itself_overlaps_fully() {
    let s = setup();
    let out = s.root.join("self_compare");
    let mut a = args(&[
        "compare",
        "--model",
        &s.path("card"),
        "--model",
        &s.path("card"),
        "--top-k",
        "3",
        "--grid-points",
        "11",
        "--out",
        &out.display().to_string(),
    ]);
    a.extend(s.data());
    ok(&a);
    let overlap = read_json(out.join("overlap.json"));
    assert_eq!(overlap[0]["overlap"], 1.0);
    for o in read_json(out.join("pd_overlay.json")).as_array().unwrap() {
        let profiles = o["profiles"].as_object().unwrap();
        assert_eq!(profiles.len(), 2);
        let v: Vec<&Json> = profiles.values().collect();
        assert_eq!(v[0], v[1]);
    }
}

#[test]
fn compare_scorecard_and_gbm() {
    let s = setup();
    let out = s.root.join("compare");
    let mut a = args(&[
        "compare",
        "--model",
        &s.path("card"),
        "--model",
        &s.path("gbm"),
        "--variable",
        "ExternalRiskEstimate",
        "--grid-points",
        "21",
        "--out",
        &out.display().to_string(),
    ]);
    a.extend(s.data());
    ok(&a);
    check_manifest(&out);
    let overlay = read_json(out.join("pd_overlay.json"));
    assert_eq!(overlay[0]["variable"], "ExternalRiskEstimate");
    let profiles = overlay[0]["profiles"].as_object().unwrap();
    assert_eq!(profiles.keys().collect::<Vec<_>>(), ["gbm", "scorecard"]);
    for p in profiles.values() {
        assert_eq!(p.as_array().unwrap().len(), 21);
    }

    // the reported overlap is |A ∩ B| / k of the emitted rankings
    let fi = read_json(out.join("importance.json"));
    let top = |m: &str| -> Vec<String> {
        fi[m]["entries"]
            .as_array()
            .unwrap()
            .iter()
            .take(5)
            .map(|e| e["variable"].as_str().unwrap().to_string())
            .collect()
    };
    let (a, b) = (top("scorecard"), top("gbm"));
    let shared = a.iter().filter(|v| b.contains(v)).count();
    let overlap = read_json(out.join("overlap.json"));
    assert_eq!(overlap[0]["k"], 5);
    assert_eq!(overlap[0]["overlap"].as_f64().unwrap(), shared as f64 / 5.0);
    let perf = read_json(out.join("performance.json"));
    assert_eq!(perf.as_array().unwrap().len(), 2);
}

#[test]
fn compare_needs_two_models() {
    let s = setup();
    let mut a = args(&["compare", "--model", &s.path("card"), "--out", &s.path("x")]);
    a.extend(s.data());
    assert_eq!(creditlens(&a).status.code(), Some(2));
}
