mod common;

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{check_golden, fixtures};
use http_body_util::BodyExt;
use sdpkit::infer::{load_model, TextPrediction};
use sdpkit_service::{router, AppState, MAX_TEXT_BYTES};
use serde_json::{json, Value};
use tower::ServiceExt;

const CALZOLARI: &str =
    "Calzolari, N. (1982). Towards the organization of lexical definitions on a database structure. In COLING 1982.";

fn app() -> Router {
    let f = fixtures();
    let state = AppState::load(&[("parscit".into(), f.tagger.clone()), ("intent".into(), f.classifier.clone())]).unwrap();
    router(state, "*").unwrap()
}

async fn call(app: Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value, headers)
}

fn golden(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[tokio::test]
async fn health_lists_models() {
    let (status, body, _) = call(app(), "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "models": {"intent": "classifier", "parscit": "tagger"}}));
}

#[tokio::test]
async fn tag_golden_and_equal_to_infer() {
    let (status, body, _) = call(app(), "POST", "/api/v1/tag/parscit", Some(json!({"text": CALZOLARI}))).await;
    assert_eq!(status, StatusCode::OK);
    check_golden(&golden("tag_calzolari.json"), &format!("{}\n", serde_json::to_string_pretty(&body).unwrap()));
    assert_eq!(body["model"], "parscit");
    let direct = load_model(&fixtures().tagger).unwrap().predict_for_text(CALZOLARI).unwrap();
    let TextPrediction::Tagged(t) = direct else { panic!() };
    assert_eq!(body["labels"], json!(t.labels));
    assert_eq!(body["spans"], serde_json::to_value(&t.spans).unwrap());
    // The fixture model fits this training instance.
    let labels: Vec<&str> = body["labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut gold = vec!["author", "author", "date"];
    gold.extend(["title"; 10]);
    gold.extend(["booktitle"; 3]);
    assert_eq!(labels, gold);
}

#[tokio::test]
async fn classify_golden_scores_sum_to_one() {
    let (status, body, _) = call(
        app(),
        "POST",
        "/api/v1/classify/intent",
        Some(json!({"text": "we use the toolkit of prior work"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    check_golden(&golden("classify_intent.json"), &format!("{}\n", serde_json::to_string_pretty(&body).unwrap()));
    let total: f64 = body["scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[tokio::test]
async fn error_envelopes() {
    let cases = [
        ("/api/v1/tag/nope", json!({"text": "x"}), StatusCode::NOT_FOUND, "unknown_model"),
        ("/api/v1/tag/parscit", json!({"text": ""}), StatusCode::UNPROCESSABLE_ENTITY, "empty_text"),
        ("/api/v1/tag/parscit", json!({"text": "   "}), StatusCode::UNPROCESSABLE_ENTITY, "empty_text"),
        ("/api/v1/classify/parscit", json!({"text": "x"}), StatusCode::CONFLICT, "kind_mismatch"),
        ("/api/v1/tag/intent", json!({"text": "x"}), StatusCode::CONFLICT, "kind_mismatch"),
        ("/api/v1/tag/parscit", json!({"txt": "x"}), StatusCode::BAD_REQUEST, "bad_request"),
        (
            "/api/v1/tag/parscit",
            json!({"text": "a ".repeat(MAX_TEXT_BYTES / 2 + 1)}),
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
        ),
        (
            "/api/v1/tag/parscit",
            json!({"text": "a".repeat(3 * MAX_TEXT_BYTES)}),
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
        ),
    ];
    for (uri, body, status, code) in cases {
        let (got, value, _) = call(app(), "POST", uri, Some(body)).await;
        assert_eq!(got, status, "{uri} {value}");
        assert_eq!(value["error"]["code"], code, "{uri}");
        assert!(value["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[tokio::test]
async fn cors_allows_any_origin() {
    let req = Request::builder()
        .method("GET")
        .uri("/api/v1/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn parallel_requests_identical() {
    let app = app();
    let mut handles = Vec::new();
    for _ in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            call(app, "POST", "/api/v1/tag/parscit", Some(json!({"text": CALZOLARI}))).await.1
        }));
    }
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn serves_over_tcp() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(sdpkit_service::serve(listener, app()));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /api/v1/health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.contains("\"status\":\"ok\""));
    server.abort();
}
