use std::collections::HashMap;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use steermine::constraint::Constraint;
use steermine::cover::MetricParams;
use steermine::io::{validate_dataset, DatasetFile, TacticFile};
use steermine::miner::MinerConfig;
use steermine::model::{Dataset, TacticId};
use steermine::nl::{self, ParsedSuggestion};
use steermine::projection::ProjectedPoint;
use steermine::session::{AdjustmentDiff, Drilldown, Session, SessionState, TacticView};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult, ErrorBody};
use crate::store::{SessionRecord, Store};

fn read<T>(l: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(l: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|e| e.into_inner())
}

pub struct SessionSlot {
    pub id: u64,
    pub dataset_id: u64,
    pub session: RwLock<Session>,
}

impl SessionSlot {
    fn record(&self, s: &Session) -> SessionRecord {
        SessionRecord {
            id: self.id,
            dataset_id: self.dataset_id,
            state: s.state().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { result: Value },
    Failed { error: ErrorBody },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub kind: String,
    pub session_id: Option<u64>,
    #[serde(flatten)]
    pub state: JobState,
}

#[derive(Default)]
struct Registry {
    datasets: HashMap<u64, Arc<Dataset>>,
    sessions: HashMap<u64, Arc<SessionSlot>>,
    jobs: HashMap<u64, Job>,
    next_dataset: u64,
    next_session: u64,
    next_job: u64,
}

pub struct AppState {
    pub config: ServiceConfig,
    store: Store,
    registry: RwLock<Registry>,
}

impl AppState {
    /// Opens the data directory and reloads every saved dataset and session.
    pub fn open(config: ServiceConfig) -> steermine::Result<Arc<Self>> {
        let store = Store::open(&config.data_dir)?;
        let mut reg = Registry {
            next_dataset: 1,
            next_session: 1,
            next_job: 1,
            ..Registry::default()
        };
        for (id, d) in store.load_datasets()? {
            reg.datasets.insert(id, Arc::new(d));
            reg.next_dataset = reg.next_dataset.max(id + 1);
        }
        for rec in store.load_sessions()? {
            let Some(d) = reg.datasets.get(&rec.dataset_id) else {
                tracing::warn!(session = rec.id, dataset = rec.dataset_id, "skipping session with missing dataset");
                continue;
            };
            let session = Session::restore(d.clone(), rec.state)?;
            reg.next_session = reg.next_session.max(rec.id + 1);
            reg.sessions.insert(
                rec.id,
                Arc::new(SessionSlot {
                    id: rec.id,
                    dataset_id: rec.dataset_id,
                    session: RwLock::new(session),
                }),
            );
        }
        tracing::info!(
            datasets = reg.datasets.len(),
            sessions = reg.sessions.len(),
            dir = %store.root().display(),
            "state loaded"
        );
        Ok(Arc::new(AppState {
            config,
            store,
            registry: RwLock::new(reg),
        }))
    }

    fn dataset(&self, id: u64) -> ApiResult<Arc<Dataset>> {
        read(&self.registry)
            .datasets
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("dataset {id}")))
    }

    fn slot(&self, id: u64) -> ApiResult<Arc<SessionSlot>> {
        read(&self.registry)
            .sessions
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))
    }

    fn persist(&self, slot: &SessionSlot, s: &Session) -> ApiResult<()> {
        self.store.save_session(&slot.record(s)).map_err(|e| {
            tracing::error!(session = slot.id, error = %e, "persisting session failed");
            ApiError::internal(format!("persisting session failed: {e}"))
        })
    }

    fn register_session(&self, dataset_id: u64, session: Session) -> ApiResult<SessionInfo> {
        let id = {
            let mut reg = write(&self.registry);
            let id = reg.next_session;
            reg.next_session += 1;
            id
        };
        let slot = Arc::new(SessionSlot {
            id,
            dataset_id,
            session: RwLock::new(session),
        });
        let info = {
            let s = read(&slot.session);
            self.persist(&slot, &s)?;
            SessionInfo::of(&slot, &s)
        };
        write(&self.registry).sessions.insert(id, slot);
        Ok(info)
    }

    /// Runs `f` on the blocking pool and records its outcome under a new
    /// job id.
    fn spawn_job(
        self: &Arc<Self>,
        kind: &str,
        session_id: Option<u64>,
        f: impl FnOnce() -> ApiResult<Value> + Send + 'static,
    ) -> u64 {
        let id = {
            let mut reg = write(&self.registry);
            let id = reg.next_job;
            reg.next_job += 1;
            reg.jobs.insert(
                id,
                Job {
                    id,
                    kind: kind.into(),
                    session_id,
                    state: JobState::Running,
                },
            );
            id
        };
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            let outcome = match f() {
                Ok(result) => JobState::Done { result },
                Err(e) => JobState::Failed { error: e.body },
            };
            if let Some(job) = write(&state.registry).jobs.get_mut(&id) {
                job.state = outcome;
            }
        });
        id
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn to_value<T: Serialize>(x: &T) -> ApiResult<Value> {
    serde_json::to_value(x).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: u64,
    pub rallies: usize,
    pub hits: usize,
    pub features: Vec<String>,
}

impl DatasetInfo {
    fn of(id: u64, d: &Dataset) -> Self {
        DatasetInfo {
            id,
            rallies: d.rallies.len(),
            hits: d.rallies.iter().map(|r| r.len()).sum(),
            features: d.schema.features.iter().map(|f| f.name.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: u64,
    pub dataset_id: u64,
    pub version: u64,
    pub tactics: usize,
    pub score: f64,
    pub description_length: f64,
    pub params: MetricParams,
    pub history: usize,
    pub next_id: TacticId,
}

impl SessionInfo {
    fn of(slot: &SessionSlot, s: &Session) -> Self {
        let eval = s.evaluation();
        SessionInfo {
            id: slot.id,
            dataset_id: slot.dataset_id,
            version: s.version(),
            tactics: s.tactics().len(),
            score: eval.score,
            description_length: eval.dl,
            params: s.params().clone(),
            history: s.history().len(),
            next_id: s.snapshot().next_id,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct WaitQuery {
    /// Run long operations inline instead of as a job.
    pub wait: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateSession {
    pub dataset_id: u64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub miner: Option<MinerConfig>,
    pub basis_size: Option<usize>,
    pub serve_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRef {
    pub job_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionResponse {
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticsResponse {
    pub version: u64,
    pub score: f64,
    pub tactics: Vec<TacticView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResponse {
    pub version: u64,
    pub basis: Vec<String>,
    pub points: Vec<ProjectedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RalliesResponse {
    pub version: u64,
    #[serde(flatten)]
    pub drilldown: Drilldown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    pub text: String,
    #[serde(default)]
    pub selected: Vec<TacticId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub constraint: Constraint,
}

/// A preview is either inline (`diff`) or, for re-mining constraints,
/// pending under `job_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedSuggestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<AdjustmentDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub base_version: u64,
    pub constraint: Constraint,
    pub removed: Vec<TacticId>,
    pub added: Vec<TacticId>,
    pub old_score: f64,
    pub new_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub session_id: u64,
    pub dataset_id: u64,
    pub tactics: TacticFile,
    pub state: SessionState,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/tactics", get(get_tactics))
        .route("/sessions/{id}/tactics/{tactic}/rallies", get(get_rallies))
        .route("/sessions/{id}/tactics/{tactic}/pin", post(pin).delete(unpin))
        .route("/sessions/{id}/projection", get(get_projection))
        .route("/sessions/{id}/projection/reset", post(reset_projection))
        .route("/sessions/{id}/suggestions", post(suggest))
        .route("/sessions/{id}/preview", post(preview))
        .route("/sessions/{id}/apply", post(apply))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/export", get(export))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

type St = State<Arc<AppState>>;

async fn health() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_datasets(State(st): St) -> Json<Vec<DatasetInfo>> {
    let reg = read(&st.registry);
    let mut out: Vec<DatasetInfo> = reg.datasets.iter().map(|(id, d)| DatasetInfo::of(*id, d)).collect();
    out.sort_by_key(|d| d.id);
    Json(out)
}

async fn create_dataset(State(st): St, Json(raw): Json<DatasetFile>) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let d = validate_dataset(&raw)?;
    let id = {
        let mut reg = write(&st.registry);
        let id = reg.next_dataset;
        reg.next_dataset += 1;
        id
    };
    st.store.save_dataset(id, &d)?;
    let info = DatasetInfo::of(id, &d);
    write(&st.registry).datasets.insert(id, Arc::new(d));
    Ok((StatusCode::CREATED, Json(info)))
}

async fn get_dataset(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<DatasetFile>> {
    Ok(Json(DatasetFile::from_dataset(&*st.dataset(id)?)))
}

async fn list_sessions(State(st): St) -> Json<Vec<SessionInfo>> {
    let slots: Vec<Arc<SessionSlot>> = read(&st.registry).sessions.values().cloned().collect();
    let mut out: Vec<SessionInfo> = slots.iter().map(|s| SessionInfo::of(s, &read(&s.session))).collect();
    out.sort_by_key(|s| s.id);
    Json(out)
}

async fn create_session(
    State(st): St,
    Query(q): Query<WaitQuery>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let dataset = st.dataset(req.dataset_id)?;
    let mut config = st.config.session_defaults();
    if let Some(m) = req.miner {
        config.miner = m;
    }
    if let Some(seed) = req.seed {
        config.miner.seed = seed;
    }
    config.params.alpha = req.alpha.unwrap_or(config.params.alpha);
    config.params.beta = req.beta.unwrap_or(config.params.beta);
    config.basis_size = req.basis_size.unwrap_or(config.basis_size);
    config.serve_window = req.serve_window.unwrap_or(config.serve_window);
    config.validate()?;

    let dataset_id = req.dataset_id;
    let state = st.clone();
    let work = move || -> ApiResult<Value> {
        let session = Session::new(dataset, config)?;
        to_value(&state.register_session(dataset_id, session)?)
    };
    if q.wait {
        Ok((StatusCode::CREATED, Json(blocking(work).await?)))
    } else {
        let job_id = st.spawn_job("mine", None, work);
        Ok((StatusCode::ACCEPTED, Json(to_value(&JobRef { job_id })?)))
    }
}

async fn get_session(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<SessionInfo>> {
    let slot = st.slot(id)?;
    let s = read(&slot.session);
    Ok(Json(SessionInfo::of(&slot, &s)))
}

async fn get_tactics(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<TacticsResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let s = read(&slot.session);
        Ok(Json(TacticsResponse {
            version: s.version(),
            score: s.evaluation().score,
            tactics: s.view(),
        }))
    })
    .await
}

async fn get_rallies(State(st): St, Path((id, tactic)): Path<(u64, TacticId)>) -> ApiResult<Json<RalliesResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let s = read(&slot.session);
        Ok(Json(RalliesResponse {
            version: s.version(),
            drilldown: s.drilldown(tactic)?,
        }))
    })
    .await
}

async fn set_pin(st: Arc<AppState>, id: u64, tactic: TacticId, pinned: bool) -> ApiResult<Json<VersionResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let mut s = write(&slot.session);
        let version = s.set_pinned(tactic, pinned)?;
        st.persist(&slot, &s)?;
        Ok(Json(VersionResponse { version }))
    })
    .await
}

async fn pin(State(st): St, Path((id, tactic)): Path<(u64, TacticId)>) -> ApiResult<Json<VersionResponse>> {
    set_pin(st, id, tactic, true).await
}

async fn unpin(State(st): St, Path((id, tactic)): Path<(u64, TacticId)>) -> ApiResult<Json<VersionResponse>> {
    set_pin(st, id, tactic, false).await
}

async fn get_projection(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<ProjectionResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let s = read(&slot.session);
        Ok(Json(ProjectionResponse {
            version: s.version(),
            basis: s.projection().basis.names.clone(),
            points: s.project(),
        }))
    })
    .await
}

async fn reset_projection(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<VersionResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let mut s = write(&slot.session);
        s.reset_projection();
        st.persist(&slot, &s)?;
        Ok(Json(VersionResponse { version: s.version() }))
    })
    .await
}

/// Previews `c`; global constraints go to a job unless `wait` is set.
async fn run_preview(
    st: Arc<AppState>,
    slot: Arc<SessionSlot>,
    c: Constraint,
    parsed: Option<ParsedSuggestion>,
    wait: bool,
) -> ApiResult<Json<PreviewResponse>> {
    let snapshot = read(&slot.session).clone();
    let version = snapshot.version();
    if c.is_global() && !wait {
        let job_id = st.spawn_job("preview", Some(slot.id), move || to_value(&snapshot.preview(&c)?));
        return Ok(Json(PreviewResponse {
            version,
            parsed,
            diff: None,
            job_id: Some(job_id),
        }));
    }
    let diff = blocking(move || Ok(snapshot.preview(&c)?)).await?;
    Ok(Json(PreviewResponse {
        version,
        parsed,
        diff: Some(diff),
        job_id: None,
    }))
}

async fn suggest(
    State(st): St,
    Path(id): Path<u64>,
    Query(q): Query<WaitQuery>,
    Json(req): Json<SuggestionRequest>,
) -> ApiResult<Json<PreviewResponse>> {
    let slot = st.slot(id)?;
    let ctx = read(&slot.session).parse_context(&req.selected);
    let parsed = nl::parse(&req.text, &ctx)?;
    run_preview(st, slot, parsed.constraint.clone(), Some(parsed), q.wait).await
}

async fn preview(
    State(st): St,
    Path(id): Path<u64>,
    Query(q): Query<WaitQuery>,
    Json(req): Json<PreviewRequest>,
) -> ApiResult<Json<PreviewResponse>> {
    let slot = st.slot(id)?;
    run_preview(st, slot, req.constraint, None, q.wait).await
}

async fn apply(State(st): St, Path(id): Path<u64>, Json(diff): Json<AdjustmentDiff>) -> ApiResult<Json<VersionResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let mut s = write(&slot.session);
        let version = s.apply(&diff)?;
        st.persist(&slot, &s)?;
        tracing::info!(session = slot.id, version, constraint = %diff.constraint, "applied");
        Ok(Json(VersionResponse { version }))
    })
    .await
}

async fn undo(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<VersionResponse>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let mut s = write(&slot.session);
        let version = s.undo()?;
        st.persist(&slot, &s)?;
        Ok(Json(VersionResponse { version }))
    })
    .await
}

async fn history(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<Vec<HistoryItem>>> {
    let slot = st.slot(id)?;
    let s = read(&slot.session);
    Ok(Json(
        s.history()
            .iter()
            .map(|h| HistoryItem {
                base_version: h.diff.base_version,
                constraint: h.constraint.clone(),
                removed: h.diff.removed.clone(),
                added: h.diff.added.iter().map(|t| t.id).collect(),
                old_score: h.diff.old_score,
                new_score: h.diff.new_score,
            })
            .collect(),
    ))
}

async fn export(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<Export>> {
    let slot = st.slot(id)?;
    blocking(move || {
        let s = read(&slot.session);
        let eval = s.evaluation();
        let mut tactics = TacticFile::new(&s.dataset().schema, s.tactics());
        tactics.params = Some(s.params().clone());
        tactics.score = Some(eval.score);
        tactics.description_length = Some(eval.dl);
        Ok(Json(Export {
            session_id: slot.id,
            dataset_id: slot.dataset_id,
            tactics,
            state: s.state().clone(),
        }))
    })
    .await
}

async fn get_job(State(st): St, Path(id): Path<u64>) -> ApiResult<Json<Job>> {
    read(&st.registry)
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job {id}")))
}
