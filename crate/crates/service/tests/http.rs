use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use prior_forge::experiments::growth_fixture_thresholds;
use prior_forge_service::{router, store, AppState, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    (router(AppState::new(Store::open(dir.path()).unwrap())), dir)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn edges(e: &[f64]) -> Value {
    let bins: Vec<Value> = e
        .windows(2)
        .map(|w| json!({ "lower": store_ext(w[0]), "upper": store_ext(w[1]) }))
        .collect();
    json!({ "bins": bins })
}

fn store_ext(v: f64) -> Value {
    prior_forge::partition::ext_real::encode(v)
}

const MIXTURE_EDGES: [f64; 11] = [f64::NEG_INFINITY, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, f64::INFINITY];

async fn mixture_session(app: &Router) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({
        "model": "gaussian-mixture",
        "design": [{ "covariate": { "x": [], "label": "y" }, "partition": edges(&MIXTURE_EDGES) }]
    })))
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn fitted_mixture(app: &Router) -> String {
    let id = mixture_session(app).await;
    let chips = json!({ "judgements": [{ "covariate": "y", "chips": [2, 5, 9, 8, 5, 5, 8, 9, 5, 2] }] });
    let (s, v) = call(app, "POST", &format!("/sessions/{id}/judgements"), Some(chips)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = call(app, "POST", &format!("/sessions/{id}/fit?wait=true"), Some(json!({ "seed": 3 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    id
}

#[tokio::test]
async fn models_are_listed() {
    let (app, _dir) = app();
    let (s, v) = call(&app, "GET", "/models", None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["models"].as_array().unwrap().iter().map(|m| m["spec"]["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["gaussian-mixture", "probit-glm", "growth-weibull"]);
    assert_eq!(v["models"][1]["spec"]["dim"], json!(2));
    assert_eq!(v["models"][1]["unconstrained_names"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn creation_errors() {
    let (app, _dir) = app();
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({ "model": "weibull-soup" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownModel");

    let overlapping = json!({ "bins": [
        { "lower": "-inf", "upper": 1.0 }, { "lower": 0.0, "upper": 2.0 }, { "lower": 2.0, "upper": "inf" }
    ] });
    let (s, v) = call(&app, "POST", "/sessions", Some(json!({
        "model": "gaussian-mixture",
        "design": [{ "covariate": { "x": [], "label": "y" }, "partition": overlapping }]
    })))
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "InvalidPartition");
    assert_eq!(v["details"]["bins"], json!([0, 1]));

    let (s, v) = call(&app, "GET", "/sessions/does-not-exist", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "SessionNotFound");
}

#[tokio::test]
async fn judgement_forms_normalise() {
    let (app, _dir) = app();
    let (_, v) = call(&app, "POST", "/sessions", Some(json!({
        "model": "growth-weibull",
        "design": [
            { "covariate": { "x": [10.0], "label": "age 10" }, "partition": edges(&[0.0, 130.0, 140.0, f64::INFINITY]) },
            { "covariate": { "x": [17.5], "label": "age 17.5" } }
        ]
    })))
    .await;
    let id = v["id"].as_str().unwrap().to_string();
    let url = format!("/sessions/{id}/judgements");

    let (s, v) = call(&app, "POST", &url, Some(json!([{ "covariate": "age 10", "chips": [2, 3, 5] }]))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["judgements"]["judgements"][0]["p"], json!([0.2, 0.3, 0.5]));
    assert_eq!(v["status"], "draft");
    assert_eq!(v["judgements_hash"].as_str().unwrap().len(), 64);

    let q = json!([{ "covariate": "age 17.5", "thresholds": [165.0, 170.0, 175.0, 180.0, 185.0] }]);
    let (s, v) = call(&app, "POST", &url, Some(q)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let p: Vec<f64> = serde_json::from_value(v["judgements"]["judgements"][1]["p"].clone()).unwrap();
    for (got, want) in p.iter().zip([0.10, 0.15, 0.25, 0.25, 0.15, 0.10]) {
        assert!((got - want).abs() < 1e-12, "{p:?}");
    }

    let bad = json!([{ "covariate": "age 17.5", "thresholds": [165.0, 160.0, 175.0, 180.0, 185.0] }]);
    let (s, v) = call(&app, "POST", &url, Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "NonIncreasingThresholds");

    let (s, v) = call(&app, "POST", &url, Some(json!([{ "covariate": "age 10", "chips": [0, 0, 0] }]))).await;
    assert_eq!(v["error"], "AllZeroChips", "{s} {v}");

    let (s, v) = call(&app, "POST", &url, Some(json!([{ "covariate": "age 99", "chips": [1, 1, 1] }]))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownCovariate");
}

#[tokio::test]
async fn fit_preconditions() {
    let (app, _dir) = app();
    let id = mixture_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "OptimizerFailure");
    assert_eq!(v["details"]["cause"], "NoJudgements");

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/predictive?covariate=y"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "NotFitted");
}

#[tokio::test]
async fn mixture_fit_and_predictive() {
    let (app, _dir) = app();
    let id = fitted_mixture(&app).await;

    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(session["status"], "fitted");
    assert_eq!(session["judgements_hash"], session["fit"]["judgements_hash"]);

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/predictive?covariate=y&from=-8&to=8&points=201"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["judgements_hash"], session["judgements_hash"]);
    let grid: Vec<f64> = serde_json::from_value(v["curve"]["grid"].clone()).unwrap();
    let density: Vec<f64> = serde_json::from_value(v["curve"]["density"].clone()).unwrap();
    let cdf: Vec<f64> = serde_json::from_value(v["curve"]["cdf"].clone()).unwrap();
    assert_eq!(grid.len(), 201);
    assert!(density.iter().all(|d| *d >= 0.0));
    assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    let area: f64 = grid.windows(2).zip(density.windows(2)).map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1])).sum();
    assert!((area - 1.0).abs() < 1e-3, "trapezoid area {area}");

    let fitted: Vec<f64> = serde_json::from_value(v["bins"]["fitted"].clone()).unwrap();
    assert!((fitted.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(v["bins"]["judged"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn edits_mark_the_fit_stale_and_refits_repeat_exactly() {
    let (app, _dir) = app();
    let id = fitted_mixture(&app).await;
    let (_, first) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), Some(json!({ "seed": 3 }))).await;
    let (_, again) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), Some(json!({ "seed": 3 }))).await;
    assert_eq!(serde_json::to_string(&first["result"]).unwrap(), serde_json::to_string(&again["result"]).unwrap());
    assert!(first["alpha_hat"].as_f64().unwrap() > 0.0);
    assert!(["poor", "moderate", "close"].contains(&first["band"].as_str().unwrap()));
    assert!(first["band_policy"].as_str().unwrap().contains("policy"));

    let chips = json!({ "judgements": [{ "covariate": "y", "chips": [1, 5, 9, 8, 5, 5, 8, 9, 5, 2] }] });
    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/judgements"), Some(chips)).await;
    assert_eq!(v["status"], "stale");
    assert_ne!(v["judgements_hash"], v["fit"]["judgements_hash"]);

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/predictive?covariate=y"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stale"], json!(true));

    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), None).await;
    assert_eq!(v["status"], "fitted");
}

#[tokio::test]
async fn probit_predictive_has_two_atoms() {
    let (app, dir) = app();
    let atoms = json!({ "atoms": [0, 1] });
    let design: Vec<Value> = [[1.0, -0.5], [1.0, 0.0], [1.0, 0.8], [0.5, 1.5]]
        .iter()
        .enumerate()
        .map(|(j, x)| json!({ "covariate": { "x": x, "label": format!("x{j}") }, "partition": atoms }))
        .collect();
    let (_, v) = call(&app, "POST", "/sessions", Some(json!({ "model": { "name": "probit-glm", "dim": 2 }, "design": design }))).await;
    let id = v["id"].as_str().unwrap().to_string();
    let subs: Vec<Value> = [0.3, 0.45, 0.6, 0.7]
        .iter()
        .enumerate()
        .map(|(j, p)| json!({ "covariate": format!("x{j}"), "p": [1.0 - p, *p] }))
        .collect();
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/judgements"), Some(json!(subs))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/predictive?covariate=x2"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let atoms: Vec<(f64, f64)> = serde_json::from_value(v["curve"]["atoms"].clone()).unwrap();
    assert_eq!(atoms.len(), 2);
    assert_eq!((atoms[0].0, atoms[1].0), (0.0, 1.0));
    assert!((atoms[0].1 + atoms[1].1 - 1.0).abs() < 1e-12);
    assert!(atoms.iter().all(|a| a.1 > 0.0 && a.1 < 1.0));
    assert_round_trip(dir.path(), &id);
}

/// Loading a stored session and saving it again reproduces the file.
fn assert_round_trip(dir: &std::path::Path, id: &str) {
    let path = dir.join(format!("{id}.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    let store = Store::open(dir).unwrap();
    let loaded = store.load(id).unwrap();
    let again = String::from_utf8(store::encode(&loaded).unwrap()).unwrap();
    if let Some((a, b)) = text.lines().zip(again.lines()).find(|(a, b)| a != b) {
        panic!("first differing line: {a} vs {b}");
    }
    assert_eq!(again, text);
    store.save(&loaded).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    let others = std::fs::read_dir(dir).unwrap().filter_map(|e| e.ok()).filter(|e| !e.file_name().to_string_lossy().ends_with(".json")).count();
    assert_eq!(others, 0, "temporary files left behind");
}

#[tokio::test]
async fn stored_sessions_round_trip_byte_for_byte() {
    let (app, dir) = app();
    let id = fitted_mixture(&app).await;
    assert_round_trip(dir.path(), &id);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_are_serialised() {
    let (app, _dir) = app();
    let labels: Vec<String> = (0..12).map(|j| format!("c{j}")).collect();
    let design: Vec<Value> = labels
        .iter()
        .map(|l| json!({ "covariate": { "x": [], "label": l }, "partition": edges(&[f64::NEG_INFINITY, 0.0, f64::INFINITY]) }))
        .collect();
    let mut ids = Vec::new();
    for _ in 0..2 {
        let (_, v) = call(&app, "POST", "/sessions", Some(json!({ "model": "gaussian-mixture", "design": design }))).await;
        ids.push(v["id"].as_str().unwrap().to_string());
    }
    let mut tasks = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        for l in &labels {
            let (app, id, l) = (app.clone(), id.clone(), l.clone());
            let chips = json!([{ "covariate": l, "chips": [1 + k as u64, 3] }]);
            tasks.push(tokio::spawn(async move { call(&app, "POST", &format!("/sessions/{id}/judgements"), Some(chips)).await }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    for (k, id) in ids.iter().enumerate() {
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        let js = v["judgements"]["judgements"].as_array().unwrap();
        assert_eq!(js.len(), labels.len());
        let want = (1 + k) as f64 / (4 + k) as f64;
        for (j, l) in js.iter().zip(&labels) {
            assert_eq!(j["covariate"]["label"], json!(l));
            assert_eq!(j["p"][0].as_f64().unwrap(), want);
        }
    }
}

async fn growth_session(app: &Router) -> String {
    let ages = [0.0, 2.5, 10.0, 17.5];
    let design: Vec<Value> = ages.iter().map(|t| json!({ "covariate": { "x": [t], "label": format!("age {t}") } })).collect();
    let (s, v) = call(app, "POST", "/sessions", Some(json!({ "model": "growth-weibull", "design": design }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["status"], "draft");
    let id = v["id"].as_str().unwrap().to_string();
    let thresholds = growth_fixture_thresholds(&ages, 0).unwrap();
    let subs: Vec<Value> = ages.iter().zip(&thresholds).map(|(t, y)| json!({ "covariate": format!("age {t}"), "thresholds": y })).collect();
    let (s, v) = call(app, "POST", &format!("/sessions/{id}/judgements"), Some(json!(subs))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["judgements"]["judgements"].as_array().unwrap().iter().all(|j| j["p"].as_array().unwrap().len() == 6));
    id
}

#[tokio::test]
async fn growth_fixture_reports_a_parameter_table() {
    let (app, dir) = app();
    let id = growth_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), Some(json!({ "max_iter": 40, "draws": 1024 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["alpha_hat"].as_f64().unwrap() > 0.0);
    let table = v["prior_summary"].as_array().unwrap();
    assert!(table.len() >= 5);
    assert!(table.iter().all(|r| r["mean"].is_number() && r["variance"].is_number()), "{table:?}");

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/predictive?covariate=age%2017.5&points=51"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["curve"]["cdf_se"].as_array().is_some());
    assert_eq!(v["bins"]["judged"].as_array().unwrap().len(), 6);
    assert_round_trip(dir.path(), &id);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fits_can_be_cancelled() {
    let (app, _dir) = app();
    let id = growth_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/fit"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["job"]["state"], "running");
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/fit"), None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("FitInProgress")));

    let (_, v) = call(&app, "DELETE", &format!("/sessions/{id}/fit"), None).await;
    assert_eq!(v["cancel_requested"], json!(true));
    let mut state = String::new();
    for _ in 0..600 {
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}/fit/status"), None).await;
        state = v["job"]["state"].as_str().unwrap().to_string();
        if state != "running" {
            assert_eq!(v["status"], "draft");
            assert_eq!(v["judgements_hash"].as_str().unwrap().len(), 64);
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(state, "cancelled");
}
