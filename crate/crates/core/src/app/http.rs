//! JSON API over the record store, consumed by the web interface.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::store::{ExportFormat, RecordFilter, ReviewAction, StatsConfig, Store, StoreError};
use crate::validator::Verdict;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Mutex<Store>>,
    pub stats: Arc<StatsConfig>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            stats: Arc::new(StatsConfig::default()),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn bad_request(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            field: None,
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, field) = match &e {
            StoreError::InvalidFilter { field, .. } => (StatusCode::BAD_REQUEST, Some(field.to_string())),
            StoreError::UnknownRecord(_) | StoreError::UnknownDoi(_) => (StatusCode::NOT_FOUND, None),
            StoreError::NotReviewable { .. } => (StatusCode::CONFLICT, None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        ApiError {
            status,
            field,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.field {
            Some(f) => json!({ "error": self.message, "field": f }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn number(params: &HashMap<String, String>, key: &str) -> ApiResult<Option<f64>> {
    match params.get(key).map(|v| v.trim()) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(ApiError::bad_request(key, format!("'{v}' is not a finite number"))),
        },
    }
}

fn range(params: &HashMap<String, String>, lo: &str, hi: &str) -> ApiResult<Option<(f64, f64)>> {
    let (a, b) = (number(params, lo)?, number(params, hi)?);
    match (a, b) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) if a > b => Err(ApiError::bad_request(lo, format!("{lo}={a} exceeds {hi}={b}"))),
        (a, b) => Ok(Some((a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY)))),
    }
}

/// Translate query parameters into a store filter.
pub fn filter_from_params(params: &HashMap<String, String>) -> ApiResult<RecordFilter> {
    let text = |k: &str| params.get(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
    let verdicts = match text("verdict") {
        None => None,
        Some(v) => Some(
            v.split(',')
                .map(|s| Verdict::parse(s.trim()).ok_or_else(|| ApiError::bad_request("verdict", format!("unknown verdict '{s}'"))))
                .collect::<ApiResult<Vec<_>>>()?,
        ),
    };
    Ok(RecordFilter {
        material: text("material"),
        category: text("category"),
        temperature_k: range(params, "t_min_K", "t_max_K")?,
        stress_mpa: range(params, "s_min_MPa", "s_max_MPa")?,
        verdicts,
    })
}

fn page(params: &HashMap<String, String>) -> ApiResult<(usize, Option<usize>)> {
    let int = |k: &str| -> ApiResult<Option<usize>> {
        params
            .get(k)
            .map(|v| v.parse::<usize>().map_err(|_| ApiError::bad_request(k, format!("'{v}' is not a count"))))
            .transpose()
    };
    Ok((int("offset")?.unwrap_or(0), int("limit")?))
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Store> {
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

async fn records(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let filter = filter_from_params(&params)?;
    let (offset, limit) = page(&params)?;
    let recs = lock(&state).query(&filter)?;
    let recs: Vec<_> = recs.into_iter().skip(offset).take(limit.unwrap_or(usize::MAX)).collect();
    Ok(Json(recs).into_response())
}

async fn curve(State(state): State<AppState>, Path(id): Path<i64>) -> ApiResult<Response> {
    let rec = lock(&state).record(id)?.ok_or_else(|| ApiError::not_found(format!("no record with id {id}")))?;
    Ok(Json(json!({ "record_id": id, "time_unit": "s", "strain_unit": "1", "points": rec.curve })).into_response())
}

async fn paper(State(state): State<AppState>, Path(doi): Path<String>) -> ApiResult<Response> {
    let doi = doi.trim_start_matches('/').to_string();
    let store = lock(&state);
    let row = store.paper(&doi)?.ok_or_else(|| ApiError::not_found(format!("no paper with doi {doi}")))?;
    let ids: Vec<i64> = store
        .query(&RecordFilter::default())?
        .into_iter()
        .filter(|r| r.doi == doi)
        .map(|r| r.record_id)
        .collect();
    Ok(Json(json!({ "paper": row, "record_ids": ids })).into_response())
}

async fn stats(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let filter = filter_from_params(&params)?;
    let s = lock(&state).stats(&filter, &state.stats)?;
    Ok(Json(s).into_response())
}

fn download(bytes: Vec<u8>, content_type: &'static str, name: &'static str) -> Response {
    (
        [
            (header::CONTENT_TYPE, content_type),
            (header::CONTENT_DISPOSITION, name),
        ],
        Bytes::from(bytes),
    )
        .into_response()
}

async fn export_csv(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let filter = filter_from_params(&params)?;
    let bytes = lock(&state).export(&filter, ExportFormat::Csv)?;
    Ok(download(bytes, "text/csv", "attachment; filename=\"records.csv\""))
}

async fn export_data(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let filter = filter_from_params(&params)?;
    let bytes = lock(&state).export(&filter, ExportFormat::Data)?;
    Ok(download(bytes, "application/json", "attachment; filename=\"records.json\""))
}

async fn review(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let mut action: ReviewAction =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("body", e.to_string()))?;
    if action.timestamp == 0 {
        action.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64);
    }
    let rec = lock(&state).review(&action)?;
    Ok(Json(rec).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/records", get(records))
        .route("/api/records/:id/curve", get(curve))
        .route("/api/papers/*doi", get(paper))
        .route("/api/stats", get(stats))
        .route("/api/export.csv", get(export_csv))
        .route("/api/export.data", get(export_data))
        .route("/api/review", post(review))
        .with_state(state)
}

/// Serve until interrupted.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
