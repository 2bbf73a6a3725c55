//! HTTP routes.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prior_forge::models::registry;
use prior_forge::optim::{fit_with, FitControl, Progress};
use prior_forge::partition::ext_real;
use prior_forge::model::PredictiveCurve;
use prior_forge::{Error as CoreError, FitResult, MonteCarlo, OptimizerConfig, Partition};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::watch;

use crate::error::{core_kind, Result, ServiceError};
use crate::session::{alpha_band, parse_model, DesignEntry, Session, Status, Submission, ALPHA_BAND_POLICY, SCHEMA_VERSION};
use crate::store::Store;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobStatus {
    pub state: JobState,
    pub iteration: usize,
    pub loglik: Option<f64>,
    pub alpha: Option<f64>,
    pub judgements_hash: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

struct Job {
    cancel: AtomicBool,
    status: watch::Sender<JobStatus>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    jobs: Arc<Mutex<HashMap<String, Arc<Job>>>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store: Arc::new(store), jobs: Arc::default() }
    }

    fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.lock().expect("job table poisoned").get(id).cloned()
    }

    fn running(&self, id: &str) -> bool {
        self.job(id).is_some_and(|j| j.status.borrow().state == JobState::Running)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(models))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/judgements", post(submit_judgements))
        .route("/sessions/{id}/fit", post(start_fit).delete(cancel_fit))
        .route("/sessions/{id}/fit/status", get(fit_status))
        .route("/sessions/{id}/predictive", get(predictive))
        .with_state(state)
}

fn hash_json<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("value serialises")))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: Value) -> Result<T> {
    serde_json::from_value(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

#[derive(Serialize)]
struct SessionView<'a> {
    #[serde(flatten)]
    session: &'a Session,
    judgements_hash: String,
    fit_running: bool,
}

fn session_view(state: &AppState, session: &Session) -> Value {
    let view = SessionView { session, judgements_hash: session.judgements_hash(), fit_running: state.running(&session.id) };
    serde_json::to_value(view).expect("session serialises")
}

async fn models() -> Json<Value> {
    Json(json!({ "schema_version": SCHEMA_VERSION, "models": registry() }))
}

#[derive(Deserialize)]
struct CreateRequest {
    model: Value,
    #[serde(default)]
    design: Vec<DesignEntry>,
}

async fn create_session(State(state): State<AppState>, Json(body): Json<Value>) -> Result<Response> {
    let req: CreateRequest = parse_body(body)?;
    let model = parse_model(&req.model)?;
    let session = Session::new(uuid::Uuid::new_v4().simple().to_string(), model, req.design)?;
    let lock = state.store.lock(&session.id);
    let _guard = lock.lock().await;
    state.store.save(&session)?;
    tracing::info!(id = %session.id, model = session.model.name(), "session created");
    Ok((StatusCode::CREATED, Json(session_view(&state, &session))).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>> {
    let session = state.store.load(&id)?;
    Ok(Json(session_view(&state, &session)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SubmitRequest {
    Wrapped {
        judgements: Vec<Submission>,
        #[serde(default)]
        expert: Option<String>,
    },
    Bare(Vec<Submission>),
}

async fn submit_judgements(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<Value>) -> Result<Json<Value>> {
    let (subs, expert) = match parse_body(body)? {
        SubmitRequest::Wrapped { judgements, expert } => (judgements, expert),
        SubmitRequest::Bare(j) => (j, None),
    };
    let lock = state.store.lock(&id);
    let _guard = lock.lock().await;
    let mut session = state.store.load(&id)?;
    session.submit(subs, expert)?;
    state.store.save(&session)?;
    Ok(Json(session_view(&state, &session)))
}

#[derive(Deserialize, Default)]
struct FitQuery {
    #[serde(default)]
    wait: bool,
}

/// Fit response: the stored result with the α̂ reading on top.
fn fit_view(session: &Session, fit: &FitResult) -> Value {
    let a = fit.alpha_hat.alpha_hat;
    json!({
        "session_id": session.id,
        "status": session.status,
        "judgements_hash": fit.judgements_hash,
        "config_hash": hash_json(&fit.config),
        "alpha_hat": a,
        "alpha_hat_capped": fit.alpha_hat.capped,
        "band": alpha_band(a),
        "band_policy": ALPHA_BAND_POLICY,
        "prior_summary": fit.prior_summary,
        "result": fit,
    })
}

async fn start_fit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FitQuery>,
    body: Option<Json<Value>>,
) -> Result<Response> {
    let config: OptimizerConfig = match body {
        Some(Json(Value::Null)) | None => OptimizerConfig::default(),
        Some(Json(v)) => parse_body(v)?,
    };
    config.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;

    let (session, judgements_hash) = {
        let lock = state.store.lock(&id);
        let _guard = lock.lock().await;
        let session = state.store.load(&id)?;
        if session.judgements.is_empty() {
            return Err(ServiceError::OptimizerFailure(CoreError::NoJudgements));
        }
        let hash = session.judgements_hash();
        (session, hash)
    };
    let config_hash = hash_json(&config);

    let job = {
        let mut jobs = state.jobs.lock().expect("job table poisoned");
        if jobs.get(&id).is_some_and(|j| j.status.borrow().state == JobState::Running) {
            return Err(ServiceError::FitInProgress(id));
        }
        let status = JobStatus {
            state: JobState::Running,
            iteration: 0,
            loglik: None,
            alpha: None,
            judgements_hash: judgements_hash.clone(),
            config_hash: config_hash.clone(),
            error: None,
        };
        let job = Arc::new(Job { cancel: AtomicBool::new(false), status: watch::Sender::new(status) });
        jobs.insert(id.clone(), job.clone());
        job
    };
    let mut done = job.status.subscribe();
    tokio::spawn(run_job(state.clone(), session, config, job.clone()));

    if !q.wait {
        let status = job.status.borrow().clone();
        return Ok((StatusCode::ACCEPTED, Json(json!({ "session_id": id, "job": status }))).into_response());
    }
    let finished = done
        .wait_for(|s| s.state != JobState::Running)
        .await
        .map_err(|_| ServiceError::Storage("fit job vanished".into()))?
        .clone();
    match finished.state {
        JobState::Succeeded => {
            let session = state.store.load(&id)?;
            let fit = session.fit.as_ref().ok_or_else(|| ServiceError::NotFitted(id.clone()))?;
            Ok(Json(fit_view(&session, fit)).into_response())
        }
        _ => {
            let body = json!({
                "error": "OptimizerFailure",
                "message": "the fit did not finish",
                "details": finished.error,
                "judgements_hash": finished.judgements_hash,
                "config_hash": finished.config_hash,
            });
            Ok((StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response())
        }
    }
}

async fn run_job(state: AppState, session: Session, config: OptimizerConfig, job: Arc<Job>) {
    let id = session.id.clone();
    let worker = job.clone();
    let outcome = tokio::task::spawn_blocking(move || -> std::result::Result<FitResult, CoreError> {
        let model = session.model.build()?;
        let report = |p: Progress| {
            worker.status.send_modify(|s| {
                s.iteration = p.iteration;
                s.loglik = Some(p.loglik);
                s.alpha = Some(p.alpha);
            })
        };
        let control = FitControl { cancel: Some(&worker.cancel), progress: Some(&report) };
        fit_with(&session.judgements, model.as_ref(), &config, control)
    })
    .await;

    let (state_after, error) = match outcome {
        Ok(Ok(fit)) => match store_fit(&state, &id, fit).await {
            Ok(()) => (JobState::Succeeded, None),
            Err(e) => (JobState::Failed, Some(json!({ "cause": e.kind(), "message": e.to_string() }))),
        },
        Ok(Err(CoreError::Cancelled)) => (JobState::Cancelled, None),
        Ok(Err(e)) => {
            tracing::warn!(%id, error = %e, "fit failed");
            (JobState::Failed, Some(json!({ "cause": core_kind(&e), "message": e.to_string() })))
        }
        Err(e) => (JobState::Failed, Some(json!({ "cause": "Panic", "message": e.to_string() }))),
    };
    job.status.send_modify(|s| {
        s.state = state_after;
        s.error = error;
    });
}

async fn store_fit(state: &AppState, id: &str, fit: FitResult) -> Result<()> {
    let lock = state.store.lock(id);
    let _guard = lock.lock().await;
    let mut session = state.store.load(id)?;
    session.record_fit(fit);
    state.store.save(&session)?;
    tracing::info!(%id, status = ?session.status, "fit stored");
    Ok(())
}

async fn fit_status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>> {
    let session = state.store.load(&id)?;
    let job = state.job(&id).map(|j| j.status.borrow().clone());
    let fit = session.fit.as_ref().map(|f| {
        json!({
            "judgements_hash": f.judgements_hash,
            "config_hash": hash_json(&f.config),
            "alpha_hat": f.alpha_hat.alpha_hat,
            "band": alpha_band(f.alpha_hat.alpha_hat),
            "converged": f.converged,
            "iterations": f.iterations,
        })
    });
    Ok(Json(json!({
        "session_id": id,
        "status": session.status,
        "judgements_hash": session.judgements_hash(),
        "job": job,
        "fit": fit,
    })))
}

async fn cancel_fit(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>> {
    if !state.store.exists(&id) {
        return Err(ServiceError::SessionNotFound(id));
    }
    let job = state.job(&id);
    let cancelled = match &job {
        Some(j) if j.status.borrow().state == JobState::Running => {
            j.cancel.store(true, Ordering::Relaxed);
            true
        }
        _ => false,
    };
    Ok(Json(json!({ "session_id": id, "cancel_requested": cancelled, "job": job.map(|j| j.status.borrow().clone()) })))
}

#[derive(Deserialize)]
struct PredictiveQuery {
    covariate: String,
    #[serde(default, with = "opt_ext")]
    from: Option<f64>,
    #[serde(default, with = "opt_ext")]
    to: Option<f64>,
    points: Option<usize>,
}

mod opt_ext {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|s| s.trim().parse::<f64>().map_err(serde::de::Error::custom)).transpose()
    }
}

const DEFAULT_POINTS: usize = 201;
const MAX_POINTS: usize = 10_001;

/// Default grid: every finite edge or atom, padded by a quarter of the
/// span and clipped to the sample space.
fn default_range(partition: Option<&Partition>, bounds: Option<(f64, f64)>) -> (f64, f64) {
    let mut pts: Vec<f64> = match partition {
        Some(Partition::Bins { bins }) => bins.iter().flat_map(|b| b.lower.iter().chain(&b.upper).copied()).collect(),
        Some(Partition::Atoms { atoms }) => atoms.iter().flatten().copied().collect(),
        None => Vec::new(),
    };
    pts.retain(|v| v.is_finite());
    let (lo, hi) = match pts.iter().copied().fold(None, |acc: Option<(f64, f64)>, v| Some(acc.map_or((v, v), |(a, b)| (a.min(v), b.max(v))))) {
        Some((a, b)) => {
            let pad = 0.25 * (b - a).max(1.0);
            (a - pad, b + pad)
        }
        None => (-1.0, 1.0),
    };
    match bounds {
        Some((l, u)) => (lo.max(l), hi.min(u)),
        None => (lo, hi),
    }
}

#[derive(Serialize)]
struct BinsView {
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<Partition>,
    fitted: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fitted_sd: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    judged: Option<Vec<f64>>,
}

async fn predictive(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<PredictiveQuery>) -> Result<Json<Value>> {
    let session = state.store.load(&id)?;
    let fit = session.fit.clone().ok_or_else(|| ServiceError::NotFitted(id.clone()))?;
    let entry = session.entry(&q.covariate)?.clone();
    let judged = fit.fitted.iter().find(|f| f.covariate.label == q.covariate).cloned();
    let partition = judged.as_ref().map(|f| f.partition.clone()).or_else(|| entry.partition.clone());

    let model = session.build_model()?;
    let space = model.sample_space(&entry.covariate);
    let bounds = space.bounds().filter(|(l, _)| l.len() == 1).map(|(l, u)| (l[0], u[0]));
    let (dlo, dhi) = default_range(partition.as_ref(), bounds);
    let from = q.from.unwrap_or(dlo);
    let to = q.to.unwrap_or(dhi);
    let points = q.points.unwrap_or(DEFAULT_POINTS);
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(ServiceError::BadRequest(format!("grid needs finite from < to, got [{from}, {to}]")));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(ServiceError::BadRequest(format!("points must lie in 2..={MAX_POINTS}")));
    }
    let grid: Vec<f64> = (0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect();

    let covariate = entry.covariate.clone();
    let lambda = fit.lambda_hat.clone();
    let mc = MonteCarlo::new(fit.config.draws, fit.config.seed);
    let (curve, bins) = tokio::task::spawn_blocking(move || -> std::result::Result<(PredictiveCurve, Option<BinsView>), CoreError> {
        let curve = model.predictive_curve(&lambda, &covariate, &grid, &mc)?;
        let bins = match (judged, partition) {
            (Some(f), _) => Some(BinsView {
                partition: Some(f.partition),
                fitted: f.fitted.values,
                fitted_sd: f.fitted.estimator_sd,
                judged: Some(f.judged),
            }),
            (None, Some(p)) => {
                let probs = model.bin_probabilities(&lambda, &covariate, &p, false, &mc)?;
                Some(BinsView { partition: Some(p), fitted: probs.values, fitted_sd: probs.estimator_sd, judged: None })
            }
            (None, None) => None,
        };
        Ok((curve, bins))
    })
    .await
    .map_err(|e| ServiceError::Storage(e.to_string()))?
    .map_err(ServiceError::OptimizerFailure)?;

    Ok(Json(json!({
        "session_id": id,
        "covariate": q.covariate,
        "stale": session.status == Status::Stale,
        "judgements_hash": fit.judgements_hash,
        "config_hash": hash_json(&fit.config),
        "curve": curve,
        "bins": bins,
        "from": ext_real::encode(from),
        "to": ext_real::encode(to),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_range_pads_and_clips() {
        let p = Partition::from_edges(&[0.0, 100.0, 150.0, f64::INFINITY]);
        assert_eq!(default_range(Some(&p), Some((0.0, f64::INFINITY))), (0.0, 187.5));
        assert_eq!(default_range(None, None), (-1.0, 1.0));
    }
}
