mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use clap::Parser;
use common::{posterior_dir, tree_hashes};
use http_body_util::BodyExt;
use salmon_cli::{run, server::router, Cli};
use salmon_core::service::{PosteriorStore, ServiceOptions};
use serde_json::Value;
use tower::ServiceExt;

fn app() -> axum::Router {
    let store = PosteriorStore::open(&posterior_dir(), ServiceOptions::default()).unwrap();
    router(Arc::new(store))
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post(app: &axum::Router, body: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::post("/project").body(Body::from(body.to_string())).unwrap()).await
}

#[tokio::test]
async fn health_reports_schema() {
    let (s, v) = get(&app(), "/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, serde_json::json!({"status": "ok", "schema": "v1"}));
}

#[tokio::test]
async fn stocks_and_summary_describe_the_fit() {
    let app = app();
    let (s, v) = get(&app, "/stocks").await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["stocks"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["north", "south"]);

    let (s, v) = get(&app, "/posterior/summary").await;
    assert_eq!(s, StatusCode::OK);
    let params = v["params"].as_array().unwrap();
    assert!(!params.is_empty());
    for p in params {
        let q = [&p["q05"], &p["q50"], &p["q95"]].map(|x| x.as_f64().unwrap());
        assert!(q[0] <= q[1] && q[1] <= q[2], "{p}");
    }
}

#[tokio::test]
async fn smolt_quantiles_are_monotone() {
    let app = app();
    for stock in ["north", "south"] {
        let (s, v) = get(&app, &format!("/posterior/smolts?stock={stock}&quantiles=0.95,0.05,0.5,0.25")).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["quantiles"], serde_json::json!([0.05, 0.25, 0.5, 0.95]));
        for row in v["values"].as_array().unwrap() {
            let q: Vec<f64> = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
        }
    }
}

#[tokio::test]
async fn bad_requests_carry_field_messages() {
    let app = app();
    let (s, v) = get(&app, "/posterior/smolts?stock=nowhere").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "E_NOT_FOUND");

    let (s, v) = get(&app, "/posterior/smolts?stock=north&quantiles=2").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["fields"][0]["field"], "quantiles");

    let (s, b) = post(&app, r#"{"name": "x", "multipliers": {"offshore": -1, "trawl": 1}}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&b).unwrap();
    let fields: Vec<&str> = v["error"]["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert!(fields.iter().any(|f| f.contains("offshore")), "{fields:?}");
    assert!(fields.iter().any(|f| f.contains("trawl")), "{fields:?}");

    let (s, b) = post(&app, "{not json").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8(b).unwrap().contains("E_VALIDATION"));

    let (s, _) = get(&app, "/no/such/route").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&app, "/policies/compare?ids=nothing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn project_matches_cli_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{"name": "coastal_cut", "horizon": 6, "multipliers": {"coastal": 0.25}}"#;
    let policy = tmp.path().join("p.json");
    std::fs::write(&policy, body).unwrap();
    let cli = Cli::parse_from([
        "salmon",
        "project",
        "--posterior-dir",
        posterior_dir().to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
    ]);
    let cli_out = tokio::task::spawn_blocking(move || {
        let mut out = Vec::new();
        run(cli, &mut out).unwrap();
        out
    })
    .await
    .unwrap();
    let (s, api_out) = post(&app(), body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(api_out, cli_out);
}

#[tokio::test]
async fn compare_uses_builtin_policies() {
    let (s, v) = get(&app(), "/policies/compare").await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["policy"].as_str().unwrap()).collect();
    for id in ["status_quo", "moratorium", "half_effort"] {
        assert!(names.contains(&id), "{names:?}");
    }
}

#[tokio::test]
async fn requests_never_touch_the_posterior_dir() {
    let before = tree_hashes(&posterior_dir());
    let app = app();
    let mut jobs = Vec::new();
    for k in 0..40 {
        let app = app.clone();
        jobs.push(tokio::spawn(async move {
            match k % 4 {
                0 => get(&app, "/stocks").await.0,
                1 => get(&app, "/posterior/smolts?stock=south").await.0,
                2 => post(&app, r#"{"name": "m", "multipliers": {"offshore": 0}}"#).await.0,
                _ => post(&app, "[]").await.0,
            }
        }));
    }
    for j in jobs {
        j.await.unwrap();
    }
    assert_eq!(before, tree_hashes(&posterior_dir()));
}
