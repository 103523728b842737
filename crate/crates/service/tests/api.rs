use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use elicit_core::descriptors::{build_descriptors, DescriptorParams};
use elicit_core::evaluation::{generate_synthetic, OracleExpert, SyntheticProblem, SyntheticSpec};
use elicit_core::prediction::SamplerConfig;
use elicit_core::session::{Condition, ElicitationData, Session, SessionConfig};
use elicit_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(seed: u64) -> (SyntheticProblem, ElicitationData) {
    let spec = SyntheticSpec {
        n_aux_docs: 300,
        ..SyntheticSpec::new(60, 50, 6, 3.0)
    };
    let p = generate_synthetic(&spec, seed).unwrap();
    let z = build_descriptors(
        &p.aux,
        p.train.feature_names(),
        DescriptorParams {
            n_clusters: 8,
            train_sample_size: None,
            seed,
        },
    )
    .unwrap();
    let data = ElicitationData::new(p.train.clone(), p.test.clone(), z).unwrap();
    (p, data)
}

fn config(iterations: usize) -> SessionConfig {
    SessionConfig {
        max_iterations: 3,
        batch_size: 4,
        sampler: SamplerConfig {
            iterations,
            burn_in: iterations / 2,
            ..SamplerConfig::default()
        },
        ..SessionConfig::default()
    }
}

fn app(data: &ElicitationData, cfg: SessionConfig) -> Router {
    router(Arc::new(AppState::new(cfg).with_dataset("demo", data.clone())))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn get_raw(app: &Router, uri: &str) -> String {
    let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    String::from_utf8(res.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap()
}

async fn create(app: &Router, condition: &str, seed: u64, id: &str) -> Value {
    let (status, view) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({"dataset": "demo", "condition": condition, "seed": seed, "id": id})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    view
}

fn names(view: &Value) -> Vec<String> {
    view["pending_query"]["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn health_lists_datasets() {
    let (_, data) = fixture(1);
    let (status, body) = call(&app(&data, config(200)), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["datasets"], json!(["demo"]));
}

#[tokio::test]
async fn session_lifecycle_and_errors() {
    let (p, data) = fixture(2);
    let app = app(&data, config(200));

    let view = create(&app, "c2", 5, "a").await;
    assert_eq!(view["status"], "ready");
    assert!(view["pending_query"].is_null());
    assert_eq!(view["iteration"], 0);

    let (s, e) = call(&app, "POST", "/sessions", Some(json!({"dataset": "demo", "condition": "c2", "seed": 1, "id": "a"}))).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("duplicate_session")));
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({"dataset": "nope", "condition": "c2", "seed": 1}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({"dataset": "demo", "condition": "c9", "seed": 1}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({"dataset": "demo"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    for uri in ["/sessions/zz", "/sessions/zz/metrics", "/sessions/zz/heatmap?features=kw0000", "/sessions/zz/snapshot"] {
        assert_eq!(call(&app, "GET", uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    assert_eq!(call(&app, "POST", "/sessions/zz/query", None).await.0, StatusCode::NOT_FOUND);

    let (s, _) = call(&app, "POST", "/sessions/a/feedback", Some(json!({}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, view) = call(&app, "POST", "/sessions/a/query", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["status"], "awaiting_feedback");
    let shown = names(&view);
    assert_eq!(shown.len(), 4);
    let heat = &view["pending_query"]["heatmap"];
    assert_eq!(heat["cols"].as_array().unwrap().len(), 4);
    assert_eq!(view["pending_query"]["total_count"], heat["total_count"]);
    assert_eq!(call(&app, "POST", "/sessions/a/query", None).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "GET", "/sessions/a", None).await.1, view);

    let outsider = (0..60)
        .map(|j| format!("kw{j:04}"))
        .find(|n| !shown.contains(n))
        .unwrap();
    let mut body: serde_json::Map<String, Value> = shown.iter().map(|n| (n.clone(), json!(0))).collect();
    body.insert(outsider.clone(), json!(1));
    let (s, e) = call(&app, "POST", "/sessions/a/feedback", Some(Value::Object(body))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["feature"], json!(outsider));
    assert_eq!(e["error"], "not_pending");

    let (s, e) = call(&app, "POST", "/sessions/a/feedback", Some(json!({"ghost": 1}))).await;
    assert_eq!((s, e["feature"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("ghost")));

    let partial: serde_json::Map<String, Value> = shown[1..].iter().map(|n| (n.clone(), json!(1))).collect();
    let (s, e) = call(&app, "POST", "/sessions/a/feedback", Some(Value::Object(partial))).await;
    assert_eq!((s, e["feature"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some(shown[0].as_str())));

    let bad: serde_json::Map<String, Value> = shown.iter().map(|n| (n.clone(), json!(2))).collect();
    assert_eq!(call(&app, "POST", "/sessions/a/feedback", Some(Value::Object(bad))).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/sessions/a/feedback", Some(json!([1, 2]))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // The failed attempts left the query pending; a correct answer goes through.
    let good: serde_json::Map<String, Value> = shown
        .iter()
        .map(|n| {
            let j = data.train.feature_index(n).unwrap();
            (n.clone(), json!(p.truth.is_relevant(j) as u8))
        })
        .collect();
    let (s, result) = call(&app, "POST", "/sessions/a/feedback", Some(Value::Object(good))).await;
    assert_eq!(s, StatusCode::OK, "{result}");
    assert_eq!(result["iteration"], 1);
    let (_, view) = call(&app, "GET", "/sessions/a", None).await;
    assert_eq!(view["iteration"], 1);
    assert!(view["pending_query"].is_null());

    let (s, metrics) = call(&app, "GET", "/sessions/a/metrics", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(metrics["mse_history"].as_array().unwrap().len(), 2);
    assert!(metrics["relevance"]["top_estimates"].is_array());
}

#[tokio::test]
async fn heatmap_endpoint() {
    let (_, data) = fixture(3);
    let app = app(&data, config(200));
    create(&app, "c3", 1, "h").await;
    let (s, heat) = call(&app, "GET", "/sessions/h/heatmap?features=kw0000,kw0003", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(heat["cols"], json!(["kw0000", "kw0003"]));
    let expected = elicit_core::dataset::heatmap_summary(&data.train, &[
        data.train.feature_index("kw0000").unwrap(),
        data.train.feature_index("kw0003").unwrap(),
    ])
    .unwrap();
    assert_eq!(heat, serde_json::to_value(&expected).unwrap());
    let (s, e) = call(&app, "GET", "/sessions/h/heatmap?features=kw0000,nope", None).await;
    assert_eq!((s, e["feature"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("nope")));
    assert_eq!(call(&app, "GET", "/sessions/h/heatmap", None).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn non_interactive_session_rejects_queries() {
    let (_, data) = fixture(4);
    let app = app(&data, config(200));
    let view = create(&app, "c1", 1, "n").await;
    assert_eq!(view["terminal"], true);
    assert_eq!(view["status"], "terminal");
    assert_eq!(call(&app, "POST", "/sessions/n/query", None).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn scripted_run_matches_library() {
    let (p, data) = fixture(5);
    let cfg = config(300);
    let app = app(&data, cfg.clone());
    let oracle = OracleExpert::new(p.truth.clone(), 0.1, 9).unwrap();
    create(&app, "c3", 21, "x").await;
    loop {
        let (_, view) = call(&app, "GET", "/sessions/x", None).await;
        if view["terminal"] == true {
            break;
        }
        let (s, view) = call(&app, "POST", "/sessions/x/query", None).await;
        assert_eq!(s, StatusCode::OK);
        let body: serde_json::Map<String, Value> = names(&view)
            .into_iter()
            .map(|n| {
                let j = data.train.feature_index(&n).unwrap();
                (n, json!(oracle.respond(j) as u8))
            })
            .collect();
        assert_eq!(call(&app, "POST", "/sessions/x/feedback", Some(Value::Object(body))).await.0, StatusCode::OK);
    }

    let mut lib = Session::create("x", data.clone(), Condition::UserModelGuided, cfg, 21).unwrap();
    while !lib.is_terminal() {
        let q = lib.next_query().unwrap();
        lib.submit_feedback(&oracle.answer(&q)).unwrap();
    }
    assert_eq!(get_raw(&app, "/sessions/x/snapshot").await, lib.snapshot_json().unwrap());
    let (_, metrics) = call(&app, "GET", "/sessions/x/metrics", None).await;
    let api_history: Vec<f64> = serde_json::from_value(metrics["mse_history"].clone()).unwrap();
    assert_eq!(api_history, lib.mse_history());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_feedback_is_applied_once() {
    let (_, data) = fixture(6);
    let app = app(&data, config(30_000));
    create(&app, "c2", 2, "c").await;
    let (_, view) = call(&app, "POST", "/sessions/c/query", None).await;
    let body = Value::Object(names(&view).into_iter().map(|n| (n, json!(1))).collect());

    let first = tokio::spawn({
        let (app, body) = (app.clone(), body.clone());
        async move { call(&app, "POST", "/sessions/c/feedback", Some(body)).await.0 }
    });
    let second = tokio::spawn({
        let (app, body) = (app.clone(), body.clone());
        async move { call(&app, "POST", "/sessions/c/feedback", Some(body)).await.0 }
    });

    let mut saw_updating = false;
    while !first.is_finished() || !second.is_finished() {
        let (_, v) = call(&app, "GET", "/sessions/c", None).await;
        saw_updating |= v["status"] == "updating";
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let mut codes = vec![first.await.unwrap(), second.await.unwrap()];
    codes.sort();
    assert_eq!(codes, vec![StatusCode::OK, StatusCode::CONFLICT]);
    assert!(saw_updating, "refit was never observed as updating");
    let (_, metrics) = call(&app, "GET", "/sessions/c/metrics", None).await;
    assert_eq!(metrics["mse_history"].as_array().unwrap().len(), 2);
}
