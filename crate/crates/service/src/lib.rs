//! Read-only JSON API over a loaded [`Bundle`].
//!
//! Routes live under `/api/v1`. Successful bodies are
//! `{"bundle_checksum": .., "data": ..}`; errors are
//! `{"code", "message", "fields", "bundle_checksum"}`. Every response also
//! carries the checksum in the `x-bundle-checksum` header.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use taxfund_core::artifacts::sha256_hex;
use taxfund_core::cost::{yearly_increases, annual_tax, CostError, CostEstimate, ScenarioConfig};
use taxfund_core::data::Neighborhood;
use taxfund_core::eligibility::EligibilityResult;
use taxfund_core::forecast::ForecastRow;
use taxfund_core::whatif::{evaluate_whatif, FieldError, WhatIfError, WhatIfRequest};
use tokio::sync::Semaphore;

mod bundle;
pub use bundle::{Bundle, BundleError, BundleMetadata};

const OPENAPI: &str = include_str!("openapi.json");

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub default_page_size: usize,
    pub max_page_size: usize,
    /// Scenario runs with at most this many replicates answer inline.
    pub sync_replicate_cap: usize,
    /// Background scenario runs allowed at once.
    pub job_workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { default_page_size: 50, max_page_size: 200, sync_replicate_cap: 2000, job_workers: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { estimate: CostEstimate },
    Failed { message: String },
}

#[derive(Clone)]
pub struct AppState {
    bundle: Arc<Bundle>,
    config: Arc<ServiceConfig>,
    jobs: Arc<Mutex<HashMap<String, JobState>>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(bundle: Bundle, config: ServiceConfig) -> Self {
        let workers = Arc::new(Semaphore::new(config.job_workers.max(1)));
        AppState { bundle: Arc::new(bundle), config: Arc::new(config), jobs: Arc::default(), workers }
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    fn ok<T: Serialize>(&self, data: T) -> Json<Value> {
        Json(json!({ "bundle_checksum": self.bundle.checksum(), "data": data }))
    }

    fn error(&self, status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, code, message: message.into(), fields: Vec::new(), checksum: self.bundle.checksum().to_owned() }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
    checksum: String,
}

impl ApiError {
    fn with_fields(mut self, fields: Vec<FieldError>) -> Self {
        self.fields = fields;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "fields": self.fields, "bundle_checksum": self.checksum });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: AppState) -> Router {
    let checksum = HeaderValue::from_str(state.bundle.checksum()).expect("hex checksum is a valid header");
    Router::new()
        .route("/api/v1/session", get(session))
        .route("/api/v1/spec", get(openapi))
        .route("/api/v1/parcels", get(list_parcels))
        .route("/api/v1/parcels/{id}", get(parcel_detail))
        .route("/api/v1/eligibility/whatif", post(whatif))
        .route("/api/v1/scenarios", post(create_scenario))
        .route("/api/v1/scenarios/{id}", get(get_scenario))
        .fallback(not_found)
        .layer(axum::middleware::map_response(move |mut res: Response| {
            let checksum = checksum.clone();
            async move {
                res.headers_mut().insert("x-bundle-checksum", checksum);
                res
            }
        }))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn not_found(State(s): State<AppState>) -> ApiError {
    s.error(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn session(State(s): State<AppState>) -> Json<Value> {
    s.ok(&s.bundle.metadata)
}

async fn openapi(State(s): State<AppState>) -> Json<Value> {
    let mut doc: Value = serde_json::from_str(OPENAPI).expect("bundled OpenAPI document is JSON");
    doc["x-bundle-checksum"] = Value::String(s.bundle.checksum().to_owned());
    Json(doc)
}

fn flag(s: &AppState, q: &HashMap<String, String>, name: &'static str) -> Result<bool, ApiError> {
    match q.get(name).map(String::as_str) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") | Some("") => Ok(true),
        Some(v) => Err(s.error(StatusCode::BAD_REQUEST, "invalid_query", format!("{name} must be true or false, got {v:?}"))),
    }
}

fn positive(s: &AppState, q: &HashMap<String, String>, name: &'static str, default: usize) -> Result<usize, ApiError> {
    match q.get(name) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(s.error(StatusCode::BAD_REQUEST, "invalid_query", format!("{name} must be a positive integer, got {v:?}"))),
        },
    }
}

async fn list_parcels(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let neighborhood = match q.get("neighborhood") {
        None => None,
        Some(v) => Some(v.parse::<Neighborhood>().ok().filter(|n| n.in_program_area()).ok_or_else(|| {
            let allowed: Vec<&str> = Neighborhood::PROGRAM_AREA.iter().map(|n| n.as_str()).collect();
            s.error(StatusCode::BAD_REQUEST, "unknown_neighborhood", format!("unknown neighborhood {v:?}; expected one of {}", allowed.join(", ")))
                .with_fields(vec![FieldError { field: "neighborhood".into(), message: format!("one of {}", allowed.join(", ")) }])
        })?),
    };
    let page = positive(&s, &q, "page", 1)?;
    let page_size = positive(&s, &q, "page_size", s.config.default_page_size)?.min(s.config.max_page_size);
    let b = &s.bundle;
    let matching: Vec<_> = b.program_parcels().filter(|p| neighborhood.map_or(true, |n| p.neighborhood == n)).collect();
    let items: Vec<Value> = matching
        .iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .map(|p| {
            let f = b.forecasts.get(&p.parcel_id);
            json!({
                "parcel_id": p.parcel_id,
                "neighborhood": p.neighborhood,
                "situs_address": p.situs_address,
                "cluster": f.map(|r| r.cluster),
                "base_value": f.map(|r| r.base_value),
                "eligible": b.eligibility.get(&p.parcel_id).map(|e| e.eligible),
            })
        })
        .collect();
    let pages = matching.len().div_ceil(page_size);
    Ok(s.ok(json!({ "page": page, "page_size": page_size, "pages": pages, "total": matching.len(), "items": items })).into_response())
}

/// Dataset-mode result as JSON, without the income estimate unless asked.
fn eligibility_json(e: &EligibilityResult, include_estimates: bool) -> Value {
    let mut v = serde_json::to_value(e).expect("result serializes");
    if !include_estimates {
        v.as_object_mut().expect("object").remove("estimated_income");
    }
    v
}

fn projection_json(row: &ForecastRow) -> Value {
    let points: Vec<Value> = row.projected.iter().map(|(y, v)| json!({ "year": y, "value": v })).collect();
    json!({ "method": row.method, "base_year": row.base_year, "base_value": row.base_value, "points": points })
}

fn subsidy_json(s: &AppState, row: &ForecastRow, parcel: &taxfund_core::data::ParcelRecord) -> Value {
    let mc = &s.bundle.policy.millage;
    let values: Vec<f64> = row.projected.values().copied().collect();
    let increases = yearly_increases(&values, row.base_value, parcel, mc);
    let taxes: Vec<f64> = values.iter().map(|v| annual_tax(*v, parcel, mc)).collect();
    json!({
        "base_tax": annual_tax(row.base_value, parcel, mc),
        "projected_tax": taxes,
        "per_year": increases,
        "total": increases.iter().sum::<f64>(),
    })
}

async fn parcel_detail(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let include = flag(&s, &q, "include_estimates")?;
    let b = &s.bundle;
    let parcel = b.program_parcel(&id).ok_or_else(|| s.error(StatusCode::NOT_FOUND, "unknown_parcel", format!("no program-area parcel {id:?}")))?;
    let forecast = b.forecasts.get(&id);
    let eligibility = b.eligibility.get(&id).map(|e| eligibility_json(e, include));
    let trend = forecast.and_then(|f| b.cluster_model.trend(f.cluster)).map(|t| t.rates());
    Ok(s.ok(json!({
        "parcel": parcel,
        "owner_occupied": parcel.owner_occupied(),
        "cluster": forecast.map(|f| f.cluster),
        "cluster_trend": trend,
        "projection": forecast.map(projection_json),
        "taxes": forecast.map(|f| subsidy_json(&s, f, parcel)),
        "eligibility": eligibility,
    }))
    .into_response())
}

fn parse_body<T: serde::de::DeserializeOwned>(s: &AppState, body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        s.error(status, "invalid_body", e.to_string())
    })
}

async fn whatif(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>, body: String) -> ApiResult {
    let include = flag(&s, &q, "include_estimates")?;
    let req: WhatIfRequest = parse_body(&s, &body)?;
    let b = &s.bundle;
    let ctx = b.dataset_context();
    let parcel = match &req.parcel_id {
        Some(id) => Some(b.program_parcel(id).ok_or_else(|| s.error(StatusCode::NOT_FOUND, "unknown_parcel", format!("no program-area parcel {id:?}")))?),
        None => None,
    };
    let base = parcel.and_then(|p| b.eligibility.get(&p.parcel_id));
    if parcel.is_some() && base.is_none() {
        return Err(s.error(StatusCode::NOT_FOUND, "unknown_parcel", "parcel has no dataset-mode eligibility result"));
    }
    let result = evaluate_whatif(&req, base, &ctx, include).map_err(|e| match e {
        WhatIfError::Invalid { fields } => s.error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", "some fields are invalid").with_fields(fields),
    })?;
    let forecast = parcel.and_then(|p| b.forecasts.get(&p.parcel_id).map(|f| (p, f)));
    Ok(s.ok(json!({
        "result": result,
        "projection": forecast.map(|(_, f)| projection_json(f)),
        "subsidy_if_enrolled": forecast.map(|(p, f)| subsidy_json(&s, f, p)),
    }))
    .into_response())
}

/// Identical configurations on the same bundle share one id.
fn job_id(checksum: &str, sc: &ScenarioConfig) -> String {
    let canonical = taxfund_core::artifacts::sorted_json(&(checksum, sc));
    sha256_hex(canonical.as_bytes())[..16].to_owned()
}

fn scenario_error(s: &AppState, e: CostError) -> ApiError {
    match e {
        CostError::InvalidConfig { field, message } => {
            s.error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", "scenario configuration is invalid").with_fields(vec![FieldError { field, message }])
        }
        CostError::HorizonTooLong { .. } => s
            .error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", e.to_string())
            .with_fields(vec![FieldError { field: "horizon_years".into(), message: e.to_string() }]),
        other => s.error(StatusCode::INTERNAL_SERVER_ERROR, "scenario_failed", other.to_string()),
    }
}

fn job_response(s: &AppState, id: &str, state: &JobState) -> Response {
    let status = match state {
        JobState::Running => StatusCode::ACCEPTED,
        _ => StatusCode::OK,
    };
    let mut body = serde_json::to_value(state).expect("job state serializes");
    body["job_id"] = Value::String(id.to_owned());
    body["poll"] = Value::String(format!("/api/v1/scenarios/{id}"));
    (status, s.ok(body)).into_response()
}

async fn create_scenario(State(s): State<AppState>, body: String) -> ApiResult {
    let sc: ScenarioConfig = parse_body(&s, &body)?;
    let fields: Vec<FieldError> = sc.field_errors().into_iter().map(|(field, message)| FieldError { field, message }).collect();
    if !fields.is_empty() {
        return Err(s.error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", "scenario configuration is invalid").with_fields(fields));
    }
    if s.bundle.forecasts.horizon < sc.horizon_years {
        return Err(scenario_error(&s, CostError::HorizonTooLong { available: s.bundle.forecasts.horizon, wanted: sc.horizon_years }));
    }
    let id = job_id(s.bundle.checksum(), &sc);
    if let Some(state) = s.jobs.lock().expect("job table").get(&id) {
        return Ok(job_response(&s, &id, state));
    }

    if sc.replicates <= s.config.sync_replicate_cap {
        let bundle = Arc::clone(&s.bundle);
        let estimate = tokio::task::spawn_blocking(move || bundle.run_scenario(&sc))
            .await
            .map_err(|e| s.error(StatusCode::INTERNAL_SERVER_ERROR, "scenario_failed", e.to_string()))?
            .map_err(|e| scenario_error(&s, e))?;
        let state = JobState::Done { estimate };
        let res = job_response(&s, &id, &state);
        s.jobs.lock().expect("job table").insert(id, state);
        return Ok(res);
    }

    s.jobs.lock().expect("job table").insert(id.clone(), JobState::Running);
    let (bundle, jobs, workers, key) = (Arc::clone(&s.bundle), Arc::clone(&s.jobs), Arc::clone(&s.workers), id.clone());
    tokio::spawn(async move {
        let _permit = workers.acquire_owned().await.expect("worker pool stays open");
        let outcome = tokio::task::spawn_blocking(move || bundle.run_scenario(&sc)).await;
        let state = match outcome {
            Ok(Ok(estimate)) => JobState::Done { estimate },
            Ok(Err(e)) => JobState::Failed { message: e.to_string() },
            Err(e) => JobState::Failed { message: e.to_string() },
        };
        jobs.lock().expect("job table").insert(key, state);
    });
    Ok(job_response(&s, &id, &JobState::Running))
}

async fn get_scenario(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let jobs = s.jobs.lock().expect("job table");
    match jobs.get(&id) {
        Some(state) => Ok(job_response(&s, &id, state)),
        None => Err(s.error(StatusCode::NOT_FOUND, "unknown_scenario", format!("no scenario run {id:?}"))),
    }
}

/// Job states by id, for inspection.
pub fn job_snapshot(state: &AppState) -> BTreeMap<String, JobState> {
    state.jobs.lock().expect("job table").iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}
