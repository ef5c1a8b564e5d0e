//! HTTP front end over a loaded component cache.
//!
//! Routes: `GET /tasks`, `POST /assemble`, `POST /evaluate`, `GET /front`.
//! The component set and bundle are read-only after [`Session::load`];
//! assembled correctors and fronts are memoized in bounded LRU caches.

use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use repcorr::io::{load_bundle, load_components, source_hash};
use repcorr::pipeline::{self, Aggregation, Evaluation};
use repcorr::{Bundle, ComponentSet, Error, Preference, SquareMap};

pub const DEFAULT_CACHE_ENTRIES: usize = 256;
const FRONT_CACHE_ENTRIES: usize = 32;
/// Largest preference grid `/front` will evaluate in one request.
pub const MAX_FRONT_POINTS: usize = 100_000;
pub const DEFAULT_SUBSET_MASS: f64 = 0.6;

/// Immutable snapshot plus memoized results.
pub struct Session {
    set: ComponentSet,
    bundle: Bundle,
    experts: Option<Vec<f64>>,
    assembled: Mutex<LruCache<AssembleKey, Assembled>>,
    fronts: Mutex<LruCache<FrontKey, Arc<FrontResponse>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct AssembleKey {
    weights: Vec<u64>,
    naive: bool,
}

#[derive(Clone)]
struct Assembled {
    w: Arc<SquareMap>,
    norm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FrontKey {
    resolution: usize,
    subset: Option<Vec<usize>>,
    mass: u64,
}

impl Session {
    /// Builds a session, checking that the components match the bundle.
    pub fn new(bundle: Bundle, set: ComponentSet, cache_entries: usize) -> repcorr::Result<Self> {
        pipeline::check_compatible(&bundle, &set)?;
        let experts = match pipeline::expert_accuracies(&bundle) {
            Ok(e) => Some(e),
            Err(Error::MissingEvaluationData(_)) => None,
            Err(e) => return Err(e),
        };
        let entries = NonZeroUsize::new(cache_entries)
            .ok_or_else(|| Error::InvalidInput("cache must hold at least one entry".into()))?;
        Ok(Self {
            set,
            bundle,
            experts,
            assembled: Mutex::new(LruCache::new(entries)),
            fronts: Mutex::new(LruCache::new(NonZeroUsize::new(FRONT_CACHE_ENTRIES).unwrap())),
        })
    }

    /// Loads a bundle manifest and the component cache computed from it.
    pub fn load(manifest: impl AsRef<Path>, components: impl AsRef<Path>) -> repcorr::Result<Self> {
        let bundle = load_bundle(manifest)?;
        let hash = source_hash(&bundle.tasks)?;
        let set = load_components(components, Some(&hash))?;
        Self::new(bundle, set, DEFAULT_CACHE_ENTRIES)
    }

    pub fn components(&self) -> &ComponentSet {
        &self.set
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn tasks(&self) -> TasksResponse {
        TasksResponse {
            d_rep: self.set.d_rep(),
            beta: self.set.beta(),
            tasks: self
                .bundle
                .tasks
                .iter()
                .enumerate()
                .map(|(i, t)| TaskInfo {
                    id: t.id.clone(),
                    expert_acc: self.experts.as_ref().map(|e| e[i]),
                    n_calib: t.n_calib(),
                })
                .collect(),
        }
    }

    fn preference(&self, weights: Vec<f64>) -> Result<Preference, ApiError> {
        if weights.len() != self.set.len() {
            return Err(ApiError::bad_request(format!(
                "preference has {} entries, expected {}",
                weights.len(),
                self.set.len()
            )));
        }
        Preference::new(weights).map_err(ApiError::from)
    }

    fn assembled(&self, p: &Preference, how: Aggregation) -> Result<(Assembled, bool), ApiError> {
        let key = AssembleKey {
            weights: p.weights().iter().map(|w| w.to_bits()).collect(),
            naive: how == Aggregation::Naive,
        };
        if let Some(hit) = self.assembled.lock().unwrap().get(&key) {
            return Ok((hit.clone(), true));
        }
        let w = pipeline::assemble(&self.set, p, how)?;
        let entry = Assembled {
            norm: w.frobenius_norm(),
            w: Arc::new(w),
        };
        self.assembled.lock().unwrap().put(key, entry.clone());
        Ok((entry, false))
    }

    pub fn assemble(&self, req: AssembleRequest) -> Result<AssembleResponse, ApiError> {
        let p = self.preference(req.preference)?;
        let how = if req.naive.unwrap_or(false) {
            Aggregation::Naive
        } else {
            Aggregation::Pareto
        };
        let start = Instant::now();
        let (entry, cached) = self.assembled(&p, how)?;
        Ok(AssembleResponse {
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            corrector_norm: entry.norm,
            cached,
        })
    }

    pub fn evaluate(&self, req: EvaluateRequest) -> Result<EvaluateResponse, ApiError> {
        let p = self.preference(req.preference)?;
        let experts = self.experts()?;
        let (entry, _) = self.assembled(&p, Aggregation::Pareto)?;
        let e = pipeline::evaluate_corrector(&self.bundle, experts, &entry.w, &p)?;
        Ok(EvaluateResponse::from(e))
    }

    pub fn front(&self, q: FrontQuery) -> Result<Arc<FrontResponse>, ApiError> {
        let t = self.set.len();
        if q.resolution == 0 {
            return Err(ApiError::bad_request("resolution must be at least 1"));
        }
        let subset = q.subset.as_deref().map(parse_indices).transpose()?;
        let mass = q.subset_mass.unwrap_or(DEFAULT_SUBSET_MASS);
        if !(0.0..=1.0).contains(&mass) {
            return Err(ApiError::bad_request(format!("subset_mass {mass} outside [0, 1]")));
        }
        let free = subset.as_ref().map_or(t, Vec::len);
        if grid_len(free, q.resolution).map_or(true, |n| n > MAX_FRONT_POINTS) {
            return Err(ApiError::bad_request(format!(
                "resolution {} over {free} tasks exceeds {MAX_FRONT_POINTS} preferences",
                q.resolution
            )));
        }
        let key = FrontKey {
            resolution: q.resolution,
            subset: subset.clone(),
            mass: if subset.is_some() { mass.to_bits() } else { 0 },
        };
        if let Some(hit) = self.fronts.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        self.experts()?;
        let prefs = pipeline::sweep_preferences(t, q.resolution, subset.as_deref().map(|s| (s, mass)))
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let sweep = pipeline::sweep(&self.bundle, &self.set, &prefs, Aggregation::Pareto)?;
        let resp = Arc::new(FrontResponse {
            points: sweep.evaluations.into_iter().map(EvaluateResponse::from).collect(),
            hv: sweep.hypervolume,
            mean_uniformity: sweep.mean_uniformity,
        });
        self.fronts.lock().unwrap().put(key, resp.clone());
        Ok(resp)
    }

    fn experts(&self) -> Result<&[f64], ApiError> {
        self.experts.as_deref().ok_or_else(|| ApiError {
            status: StatusCode::CONFLICT,
            message: "bundle has no heads or labels to evaluate with".into(),
        })
    }
}

fn parse_indices(s: &str) -> Result<Vec<usize>, ApiError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| ApiError::bad_request(format!("subset entry `{x}` is not a task index")))
        })
        .collect()
}

/// Number of points on the simplex grid, `C(resolution + tasks - 1, tasks - 1)`,
/// or `None` on overflow.
pub fn grid_len(tasks: usize, resolution: usize) -> Option<usize> {
    let k = tasks.checked_sub(1)?;
    let mut n: usize = 1;
    for i in 1..=k {
        n = n.checked_mul(resolution + i)? / i;
    }
    Some(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub id: String,
    pub expert_acc: Option<f64>,
    pub n_calib: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasksResponse {
    pub d_rep: usize,
    pub beta: f64,
    pub tasks: Vec<TaskInfo>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssembleRequest {
    pub preference: Vec<f64>,
    #[serde(default)]
    pub naive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleResponse {
    pub latency_ms: f64,
    pub corrector_norm: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub preference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub id: String,
    pub acc: f64,
    pub normalized_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub per_task: Vec<TaskScore>,
    pub uniformity: f64,
    pub preference_echo: Vec<f64>,
}

impl From<Evaluation> for EvaluateResponse {
    fn from(e: Evaluation) -> Self {
        Self {
            preference_echo: e.preference.weights().to_vec(),
            uniformity: e.uniformity,
            per_task: e
                .per_task
                .into_iter()
                .map(|s| TaskScore {
                    id: s.id,
                    acc: s.acc,
                    normalized_acc: s.normalized_acc,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FrontQuery {
    pub resolution: usize,
    pub subset: Option<String>,
    pub subset_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontResponse {
    pub points: Vec<EvaluateResponse>,
    pub hv: f64,
    pub mean_uniformity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::InvalidPreference(_) | Error::DimMismatch(_) | Error::InvalidInput(_) => StatusCode::BAD_REQUEST,
            Error::SingularSystem(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::MissingEvaluationData(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

/// Parses a JSON body; every syntax or shape error is a 400.
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?
}

async fn tasks(State(s): State<Arc<Session>>) -> Json<TasksResponse> {
    Json(s.tasks())
}

async fn assemble(State(s): State<Arc<Session>>, body: Bytes) -> Result<Json<AssembleResponse>, ApiError> {
    let req: AssembleRequest = parse_body(&body)?;
    blocking(move || s.assemble(req)).await.map(Json)
}

async fn evaluate(State(s): State<Arc<Session>>, body: Bytes) -> Result<Json<EvaluateResponse>, ApiError> {
    let req: EvaluateRequest = parse_body(&body)?;
    blocking(move || s.evaluate(req)).await.map(Json)
}

async fn front(
    State(s): State<Arc<Session>>,
    q: Result<Query<FrontQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let resp = blocking(move || s.front(q)).await?;
    Ok(Json(&*resp).into_response())
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/tasks", get(tasks))
        .route("/assemble", post(assemble))
        .route("/evaluate", post(evaluate))
        .route("/front", get(front))
        .layer(CorsLayer::permissive())
        .with_state(session)
}

/// Serves until the process is stopped.
pub async fn serve(session: Arc<Session>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(session)).await
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod book {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_len_matches_binomial() {
        assert_eq!(grid_len(3, 10), Some(66));
        assert_eq!(grid_len(2, 2), Some(3));
        assert_eq!(grid_len(1, 7), Some(1));
        assert_eq!(grid_len(8, 6), Some(1716));
        assert_eq!(grid_len(0, 3), None);
        for t in 1..5 {
            for r in 1..6 {
                assert_eq!(grid_len(t, r), Some(repcorr::simplex_grid(t, r).unwrap().len()));
            }
        }
    }

    #[test]
    fn status_mapping() {
        let s = |e: Error| ApiError::from(e).status;
        assert_eq!(s(Error::InvalidPreference("x".into())), StatusCode::BAD_REQUEST);
        assert_eq!(s(Error::SingularSystem("x".into())), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(s(Error::MissingEvaluationData("x".into()).for_task("a")), StatusCode::CONFLICT);
        assert_eq!(s(Error::EmptyBundle), StatusCode::INTERNAL_SERVER_ERROR);
    }
}
