//! HTTP service: generation, random bundled datasets and a health probe.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use serde::Deserialize;
use serde_json::{json, Value};
use vizseq::bundled;
use vizseq::checkpoint::Model;
use vizseq::corpus::{infer_schema, Dataset};
use vizseq::pipeline::{generate, GenerateError};

pub const DEFAULT_BEAM: usize = 15;
/// Widest beam a request may ask for.
pub const MAX_BEAM: usize = 64;

#[derive(Clone, Default)]
pub struct AppState {
    pub model: Option<Arc<Model<f32>>>,
    pub checkpoint_id: Option<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/generate", post(generate_handler))
        .route("/datasets/random", get(random_dataset))
        .route("/health", get(health))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

struct GenerateRequest {
    dataset: Dataset,
    beam_width: usize,
    max_candidates: Option<usize>,
    row: usize,
}

fn usize_field(body: &serde_json::Map<String, Value>, key: &str) -> Result<Option<usize>, String> {
    match body.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| format!("\"{key}\" must be a non-negative integer")),
    }
}

fn parse_request(bytes: &[u8]) -> Result<GenerateRequest, String> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| format!("body is not JSON: {e}"))?;
    let Value::Object(body) = value else {
        return Err("body must be a JSON object".into());
    };
    let dataset = match (body.get("data"), body.get("dataset")) {
        (Some(data), _) => Dataset::from_value("request", data.clone()).map_err(|e| e.to_string())?,
        (None, Some(Value::String(name))) => {
            bundled::heldout_dataset(name).ok_or_else(|| format!("unknown dataset {name}"))?
        }
        (None, Some(_)) => return Err("\"dataset\" must be a string".into()),
        (None, None) => return Err("one of \"data\" or \"dataset\" is required".into()),
    };
    let beam_width = usize_field(&body, "beam_width")?.unwrap_or(DEFAULT_BEAM);
    if beam_width == 0 || beam_width > MAX_BEAM {
        return Err(format!("beam_width must be between 1 and {MAX_BEAM}"));
    }
    let max_candidates = usize_field(&body, "max_candidates")?;
    let row = usize_field(&body, "row")?.unwrap_or(0);
    if row >= dataset.records.len() {
        return Err(format!("row {row} out of range for {} records", dataset.records.len()));
    }
    Ok(GenerateRequest { dataset, beam_width, max_candidates, row })
}

async fn generate_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model loaded");
    };
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let result = tokio::task::spawn_blocking(move || {
        let out = generate(&model, &req.dataset, req.row, req.beam_width, false);
        (req, out)
    })
    .await;
    let (req, out) = match result {
        Ok(v) => v,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("decoder task failed: {e}")),
    };
    let specs = match out {
        Ok((_, _, specs)) => specs,
        Err(e @ GenerateError::TooLong { .. }) => return error(StatusCode::PAYLOAD_TOO_LARGE, e.to_string()),
        Err(e @ (GenerateError::Corpus(_) | GenerateError::RowOutOfRange { .. })) => {
            return error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let schema = infer_schema(&req.dataset).unwrap_or_default();
    let limit = req.max_candidates.unwrap_or(specs.len());
    let candidates: Vec<Value> = specs
        .iter()
        .take(limit)
        .map(|g| {
            json!({
                "spec": g.spec,
                "score": g.score,
                "language_valid": g.validity.language_valid,
                "visualization_valid": g.validity.visualization_valid,
                "phantom_fields": g.validity.phantom_fields,
            })
        })
        .collect();
    Json(json!({
        "candidates": candidates,
        "schema": schema,
        "checkpoint_id": state.checkpoint_id,
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct RandomQuery {
    seed: Option<u64>,
}

async fn random_dataset(Query(q): Query<RandomQuery>) -> Response {
    let i = match q.seed {
        Some(s) => rand_chacha::ChaCha8Rng::seed_from_u64(s).gen_range(0..bundled::HELDOUT.len()),
        None => rand::thread_rng().gen_range(0..bundled::HELDOUT.len()),
    };
    let (name, text) = bundled::HELDOUT[i];
    let data: Value = serde_json::from_str(text).expect("bundled datasets are JSON");
    Json(json!({ "name": name, "data": data })).into_response()
}

async fn health(State(state): State<AppState>) -> Response {
    Json(json!({
        "status": "ok",
        "model_loaded": state.model.is_some(),
        "checkpoint_id": state.checkpoint_id,
    }))
    .into_response()
}
