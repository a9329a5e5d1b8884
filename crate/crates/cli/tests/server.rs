use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vizseq::bundled;
use vizseq::checkpoint::Model;
use vizseq::corpus::{generate_pairs, load_corpus_dir};
use vizseq::tokenizer::Vocabs;
use vizseq::train::{init_params, TrainConfig};
use vizseq_cli::server::{router, AppState};

fn state() -> AppState {
    let corpus = load_corpus_dir(&bundled::corpus_dir()).unwrap();
    let vocabs = Vocabs::build(&generate_pairs(&corpus, 1, None, 0).unwrap());
    let config = TrainConfig { d_cell: 4, ..Default::default() };
    let model = Model { params: init_params(&vocabs, &config), vocabs, max_len: 200 };
    AppState { model: Some(Arc::new(model)), checkpoint_id: Some("abc123".into()) }
}

async fn call(state: AppState, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn post(body: impl Into<Body>) -> Request<Body> {
    Request::post("/generate").header("content-type", "application/json").body(body.into()).unwrap()
}

#[tokio::test]
async fn generate_returns_one_candidate_per_beam() {
    let body = json!({"data": [{"a": 1, "b": "x"}, {"a": 2, "b": "y"}], "beam_width": 3, "row": 1});
    let (status, v) = call(state(), post(body.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let cands = v["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    for c in cands {
        assert!(c["spec"].is_string());
        assert!(c["score"].is_number());
        assert!(c["language_valid"].is_boolean() && c["visualization_valid"].is_boolean());
        assert!(c["phantom_fields"].is_array());
    }
    assert_eq!(v["checkpoint_id"], "abc123");
    assert_eq!(v["schema"], json!([{"name": "a", "kind": "numeric"}, {"name": "b", "kind": "string"}]));
}

#[tokio::test]
async fn replayed_requests_are_identical() {
    let body = json!({"dataset": "women", "beam_width": 2}).to_string();
    let (_, a) = call(state(), post(body.clone())).await;
    let (_, b) = call(state(), post(body)).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn max_candidates_truncates() {
    let body = json!({"dataset": "iris", "beam_width": 4, "max_candidates": 2});
    let (status, v) = call(state(), post(body.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn bad_requests() {
    for body in [
        "nope".to_string(),
        json!({"data": []}).to_string(),
        json!({"data": [{"a": 1}], "beam_width": 0}).to_string(),
        json!({"data": [{"a": 1}], "row": 3}).to_string(),
        json!({"data": [{"a": 1}, {"b": 2}]}).to_string(),
        json!({"dataset": "unknown"}).to_string(),
    ] {
        let (status, v) = call(state(), post(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn oversized_record_is_rejected() {
    let body = json!({"data": [{"note": "x".repeat(600)}]});
    let (status, v) = call(state(), post(body.to_string())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert!(v["error"].as_str().unwrap().contains("199"), "{v}");
}

#[tokio::test]
async fn no_model_means_unavailable() {
    let (status, _) = call(AppState::default(), post(json!({"dataset": "iris"}).to_string())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, v) = call(AppState::default(), Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["model_loaded"], false);
}

#[tokio::test]
async fn random_dataset_is_seedable() {
    let get = |uri: &str| Request::get(uri).body(Body::empty()).unwrap();
    let (status, a) = call(AppState::default(), get("/datasets/random?seed=5")).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(AppState::default(), get("/datasets/random?seed=5")).await;
    assert_eq!(a, b);
    let name = a["name"].as_str().unwrap();
    assert!(bundled::heldout_dataset(name).is_some());
    assert!(!a["data"].as_array().unwrap().is_empty());
}
