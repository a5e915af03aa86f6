//! HTTP contract of the scoring service, driven in-process.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use clap::Parser;
use creditlens::args::Cli;
use creditlens::service::{router, ServiceState};
use creditlens_core::{heloc, BinDef, ModelArtifact, Value};
use http_body_util::BodyExt;
use serde_json::{json, Map, Value as Json};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    state: Arc<ServiceState>,
}

fn cli(args: &[&str]) {
    let mut argv = vec!["creditlens", "-q"];
    argv.extend_from_slice(args);
    creditlens::run(Cli::try_parse_from(argv).unwrap()).unwrap();
}

/// A model directory holding the golden card plus a trained scorecard and
/// boosted model with their reference samples.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let p = |s: &str| root.join(s).display().to_string();
        cli(&["synth", "--rows", "1500", "--seed", "11", "--out", &p("data")]);
        let data = p("data/heloc.csv");
        let schema = p("data/schema.json");
        let common = ["--data", &data, "--schema", &schema, "--reference-cap", "120"];
        let mut card = vec!["train", "--model", "scorecard", "--out"];
        let card_out = p("models/card");
        card.push(&card_out);
        card.extend_from_slice(&common);
        cli(&card);
        let mut gbm = vec!["train", "--model", "gbm", "--n-trees", "30", "--out"];
        let gbm_out = p("models/gbm");
        gbm.push(&gbm_out);
        gbm.extend_from_slice(&common);
        cli(&gbm);
        let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/golden_scorecard.json");
        std::fs::copy(fixture, root.join("models/golden.json")).unwrap();
        let state = Arc::new(ServiceState::load_dir(&root.join("models")).unwrap());
        Fixture { _dir: dir, root, state }
    })
}

async fn call(method: &str, uri: &str, body: Option<&Json>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(serde_json::to_vec(b).unwrap()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = router(fixture().state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn post(uri: &str, body: &Json) -> (StatusCode, Json) {
    let (s, b) = call("POST", uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn get(uri: &str) -> (StatusCode, Json) {
    let (s, b) = call("GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

/// Raw columns of one synthetic applicant, no indicators.
fn applicant(i: usize) -> Map<String, Json> {
    let ds = heloc::generate(50, 99).unwrap();
    ds.record(i)
        .into_iter()
        .map(|(k, v)| (k, json!(v.as_f64().unwrap())))
        .collect()
}

fn f(v: &Json) -> f64 {
    v.as_f64().unwrap()
}

fn inside(def: &BinDef) -> Json {
    match def {
        BinDef::Interval { lo, hi } if hi.is_finite() => json!(hi),
        BinDef::Interval { lo, .. } => json!(lo + 1.0),
        BinDef::Levels(l) => json!(l[0]),
        BinDef::Special(c) => json!(c[0]),
    }
}

#[tokio::test]
async fn health_and_listing() {
    let (s, body) = get("/healthz").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    let (_, body) = get("/models").await;
    let names: Vec<&str> = body["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["card", "gbm", "golden"]);
}

#[tokio::test]
async fn unknown_model_is_404() {
    let body = json!({ "applicant": applicant(0), "method": "breakdown", "variable": "ExternalRiskEstimate" });
    for uri in [
        "/models/none/score",
        "/models/none/explain/local",
        "/models/none/whatif",
    ] {
        assert_eq!(post(uri, &body).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    assert_eq!(
        get("/models/none/global?kind=importance").await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn missing_field_is_400_and_named() {
    let mut a = applicant(0);
    a.remove("ExternalRiskEstimate");
    let (s, body) = post("/models/gbm/score", &Json::Object(a.clone())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["missing"], json!(["ExternalRiskEstimate"]));
    assert!(body["error"].as_str().unwrap().contains("ExternalRiskEstimate"));

    let (s, body) = post("/models/gbm/explain/local", &json!({ "applicant": applicant(0) })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["missing"], json!(["method"]));

    let mut bad = applicant(0);
    bad.insert("AverageMInFile".into(), json!("many"));
    let (s, body) = post("/models/gbm/score", &Json::Object(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["invalid"], json!(["AverageMInFile"]));
}

#[tokio::test]
async fn golden_best_bins_score_502() {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/golden_scorecard.json"))
            .unwrap();
    let card = creditlens_core::Scorecard::from_json(&text).unwrap();
    let best: Map<String, Json> = card
        .variables
        .iter()
        .map(|v| {
            let b = v.bins.iter().max_by_key(|b| b.points).unwrap();
            (v.name.clone(), inside(&b.definition))
        })
        .collect();
    let (s, body) = post("/models/golden/score", &json!({ "applicant": best })).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["points"], 502);
    let parts: i64 = body["per_variable_points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["points"].as_i64().unwrap())
        .sum();
    assert_eq!(parts + card.intercept_points, 502);
    assert!(f(&body["pd"]) > 0.0 && f(&body["pd"]) < 1.0);
}

#[tokio::test]
async fn score_is_pure_under_concurrency() {
    let body = Json::Object(applicant(4));
    let first = call("POST", "/models/gbm/score", Some(&body)).await;
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let body = body.clone();
            tokio::spawn(async move { call("POST", "/models/gbm/score", Some(&body)).await })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), first);
    }
    let card = call("POST", "/models/card/score", Some(&body)).await;
    assert_eq!(card, call("POST", "/models/card/score", Some(&body)).await);
}

#[tokio::test]
async fn breakdown_is_complete_with_top_k_segments() {
    for model in ["card", "gbm"] {
        for i in 0..5 {
            let req = json!({ "applicant": applicant(i), "method": "breakdown", "top_k": 3 });
            let (s, body) = post(&format!("/models/{model}/explain/local"), &req).await;
            assert_eq!(s, StatusCode::OK, "{body}");
            assert!(f(&body["residual"]).abs() < 1e-8);
            let segments = body["segments"].as_array().unwrap();
            assert_eq!(segments.len(), 4);
            assert_eq!(segments[3]["label"], "all other variables");
            let named: Vec<&Json> = segments[..3].iter().map(|s| &s["label"]).collect();
            let first: Vec<&Json> = body["contributions"].as_array().unwrap()[..3]
                .iter()
                .map(|c| &c["variable"])
                .collect();
            assert_eq!(named, first);
        }
    }
}

#[tokio::test]
async fn one_path_shap_equals_its_breakdown() {
    let a = applicant(2);
    let req = json!({ "applicant": a, "method": "shap", "n_paths": 1, "seed": 5 });
    let (s, shap) = post("/models/gbm/explain/local", &req).await;
    assert_eq!(s, StatusCode::OK, "{shap}");
    assert_eq!(shap["n_paths"], 1);
    let req = json!({ "applicant": a, "method": "breakdown", "order": shap["order"] });
    let (_, bd) = post("/models/gbm/explain/local", &req).await;
    let delta = |doc: &Json, v: &Json| {
        doc["contributions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["variable"] == *v)
            .map(|c| f(&c["delta"]))
            .unwrap()
    };
    for v in shap["order"].as_array().unwrap() {
        assert_eq!(delta(&shap, v), delta(&bd, v), "{v}");
    }
    assert_eq!(shap["baseline"], bd["baseline"]);
}

#[tokio::test]
async fn whatif_at_own_value_matches_score() {
    for model in ["card", "gbm"] {
        for i in 0..5 {
            let a = applicant(i);
            let (_, score) = post(&format!("/models/{model}/score"), &Json::Object(a.clone())).await;
            let own = a["ExternalRiskEstimate"].clone();
            let req = json!({ "applicant": a, "variable": "ExternalRiskEstimate", "grid": [own] });
            let (s, cp) = post(&format!("/models/{model}/whatif"), &req).await;
            assert_eq!(s, StatusCode::OK, "{cp}");
            assert_eq!(cp["responses"].as_array().unwrap().len(), 1);
            assert!((f(&cp["responses"][0]) - f(&score["pd"])).abs() <= 1e-12);
            assert!((f(&cp["anchor"]["response"]) - f(&score["pd"])).abs() <= 1e-12);
        }
    }
}

#[tokio::test]
async fn whatif_default_grid_and_indicator_follow_source() {
    let a = applicant(1);
    let req = json!({ "applicant": a, "variable": "ExternalRiskEstimate" });
    let (s, cp) = post("/models/gbm/whatif", &req).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cp["grid"].as_array().unwrap().len(), 101);

    // a special code in the source column switches its indicator on
    let mut special = a.clone();
    special.insert("ExternalRiskEstimate".into(), json!(-9.0));
    let (_, score) = post("/models/gbm/score", &Json::Object(special)).await;
    let req = json!({ "applicant": a, "variable": "ExternalRiskEstimate", "grid": [-9.0] });
    let (_, cp) = post("/models/gbm/whatif", &req).await;
    assert_eq!(cp["responses"][0], score["pd"]);
}

#[tokio::test]
async fn monotone_scorecard_variable_gives_monotone_profile() {
    let fx = fixture();
    let artifact = ModelArtifact::load(fx.root.join("models/card/model.json")).unwrap();
    let card = &artifact.as_scorecard().unwrap().card;
    let schema = creditlens_core::Schema::from_json_file(fx.root.join("models/card/schema.json")).unwrap();
    let constrained: Vec<&str> = card
        .variables
        .iter()
        .filter(|v| schema.columns.iter().any(|c| c.name == v.name && !c.monotone.is_none()))
        .map(|v| v.name.as_str())
        .collect();
    assert!(!constrained.is_empty());
    for name in constrained {
        let var = card.variables.iter().find(|v| v.name == name).unwrap();
        let req = json!({ "applicant": applicant(0), "variable": name });
        let (s, cp) = post("/models/card/whatif", &req).await;
        assert_eq!(s, StatusCode::OK);
        let grid = cp["grid"].as_array().unwrap();
        let pd: Vec<f64> = cp["responses"].as_array().unwrap().iter().map(f).collect();
        let points: Vec<i64> = grid
            .iter()
            .map(|z| var.bins[var.locate(&Value::Num(f(z))).unwrap()].points)
            .collect();
        // more points, lower PD; equal points, equal PD
        for i in 1..grid.len() {
            match points[i].cmp(&points[i - 1]) {
                std::cmp::Ordering::Greater => assert!(pd[i] < pd[i - 1], "{name}"),
                std::cmp::Ordering::Less => assert!(pd[i] > pd[i - 1], "{name}"),
                std::cmp::Ordering::Equal => assert_eq!(pd[i], pd[i - 1], "{name}"),
            }
        }
        let up = pd.windows(2).all(|w| w[1] >= w[0]);
        let down = pd.windows(2).all(|w| w[1] <= w[0]);
        assert!(up || down, "{name} profile is not monotone");
    }
}

#[tokio::test]
async fn global_reports() {
    let (s, fi) = get("/models/gbm/global?kind=importance").await;
    assert_eq!(s, StatusCode::OK);
    let imp: Vec<f64> = fi["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| f(&e["importance"]))
        .collect();
    assert!(imp.windows(2).all(|w| w[0] >= w[1]));

    let (_, fi) = get("/models/card/global?kind=importance").await;
    assert!(fi["points_range"].as_array().is_some_and(|r| !r.is_empty()));

    let (s, pdp) = get("/models/gbm/global?kind=pdp&variable=ExternalRiskEstimate").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(pdp["variable"], "ExternalRiskEstimate");
    assert_eq!(
        pdp["values"].as_array().unwrap().len(),
        pdp["grid"].as_array().unwrap().len()
    );

    let (s, body) = get("/models/gbm/global?kind=pdp").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["missing"], json!(["variable"]));
    assert_eq!(get("/models/gbm/global?kind=shape").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get("/models/gbm/global").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        get("/models/gbm/global?kind=pdp&variable=Nothing").await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn models_without_reference_only_score() {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/golden_scorecard.json"))
            .unwrap();
    let card = creditlens_core::Scorecard::from_json(&text).unwrap();
    let a: Map<String, Json> = card
        .variables
        .iter()
        .map(|v| (v.name.clone(), inside(&v.bins[0].definition)))
        .collect();
    let req = json!({ "applicant": a, "method": "breakdown" });
    assert_eq!(post("/models/golden/explain/local", &req).await.0, StatusCode::CONFLICT);
    assert_eq!(
        get("/models/golden/global?kind=importance").await.0,
        StatusCode::CONFLICT
    );
    let req = json!({ "applicant": a, "variable": "ExternalRiskEstimate", "grid": [70.0] });
    assert_eq!(post("/models/golden/whatif", &req).await.0, StatusCode::OK);
}

#[tokio::test]
async fn numbers_carry_ten_significant_digits() {
    let (_, bytes) = call("POST", "/models/gbm/score", Some(&Json::Object(applicant(3)))).await;
    let text = String::from_utf8(bytes).unwrap();
    let pd = text.split("\"pd\":").nth(1).unwrap().trim_end_matches('}');
    let digits = pd.trim_start_matches("0.").trim_start_matches('0');
    assert!(digits.len() <= 10, "{pd}");
}
