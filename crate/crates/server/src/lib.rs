// SPDX-License-Identifier: MIT OR Apache-2.0

//! Local HTTP service over one loaded model and dataset.
//!
//! | method | path            | body                                     |
//! |--------|-----------------|------------------------------------------|
//! | GET    | `/health`       |                                          |
//! | GET    | `/pairs`        |                                          |
//! | GET    | `/pairs/{id}`   | `?condition=` when an id is ambiguous    |
//! | GET    | `/manifest`     |                                          |
//! | POST   | `/score`        | `{pair_id, condition?}`                  |
//! | POST   | `/interchange`  | `{pair_id, condition?, site}`            |
//! | POST   | `/sweep`        | `{pair_id, condition?, kind, filters?, specials?}` |
//!
//! Every response carries the run manifest digest in `x-manifest-digest`.
//! Errors are `{"error": {"kind", "message"}}`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use interchange_core::dataset::{annotate_classes, Condition, Side, SpecialTokens, TokenClass, Vocab, WinogradPair};
use interchange_core::engine::{format_results, grids_from_rows, run_sweep, GridFile, SweepFilters, SweepKind, SweepRow, SweepSpec};
use interchange_core::manifest::RunManifest;
use interchange_core::model::{forward, ForwardTrace, ModelBundle};
use interchange_core::patch::{ActivationSite, PatchSet};
use interchange_core::scoring::{strict_metric, weak_metric, EffectContext, EffectRecord, PairScores};
use interchange_core::{Error, TokenId};

pub const MANIFEST_HEADER: &str = "x-manifest-digest";

/// Default limit on result rows per `/sweep` request.
pub const DEFAULT_CELL_BUDGET: usize = 20_000;

/// Bounded FIFO cache of unpatched traces.
struct TraceCache {
    capacity: usize,
    order: VecDeque<CacheKey>,
    entries: HashMap<CacheKey, Arc<ForwardTrace>>,
}

/// `(pair_id, condition, sentence, tokens)`. The token list already
/// reflects any mask resizing.
type CacheKey = (String, Condition, Side, Vec<TokenId>);

impl TraceCache {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::new(),
            entries: HashMap::new(),
        }
    }

    fn get(&self, key: &CacheKey) -> Option<Arc<ForwardTrace>> {
        self.entries.get(key).cloned()
    }

    fn insert(&mut self, key: CacheKey, trace: Arc<ForwardTrace>) {
        if self.capacity == 0 || self.entries.contains_key(&key) {
            return;
        }
        while self.entries.len() >= self.capacity {
            match self.order.pop_front() {
                Some(old) => {
                    self.entries.remove(&old);
                }
                None => break,
            }
        }
        self.order.push_back(key.clone());
        self.entries.insert(key, trace);
    }
}

/// Shared, read-only session plus the trace cache.
pub struct AppState {
    model: ModelBundle,
    pairs: Vec<WinogradPair>,
    vocab: Vocab,
    manifest: RunManifest,
    digest: String,
    cell_budget: usize,
    cache: Mutex<TraceCache>,
}

impl AppState {
    pub fn new(model: ModelBundle, pairs: Vec<WinogradPair>, vocab: Vocab, manifest: RunManifest) -> Self {
        let digest = manifest.digest();
        Self {
            model,
            pairs,
            vocab,
            manifest,
            digest,
            cell_budget: DEFAULT_CELL_BUDGET,
            cache: Mutex::new(TraceCache::new(256)),
        }
    }

    pub fn with_cell_budget(mut self, budget: usize) -> Self {
        self.cell_budget = budget;
        self
    }

    pub fn with_cache_capacity(self, capacity: usize) -> Self {
        *self.cache.lock() = TraceCache::new(capacity);
        self
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn find(&self, pair_id: &str, condition: Option<Condition>) -> Result<&WinogradPair, ApiError> {
        let mut matches = self
            .pairs
            .iter()
            .filter(|p| p.pair_id == pair_id && condition.is_none_or(|c| p.condition == c));
        let first = matches.next().ok_or_else(|| ApiError::from(Error::UnknownPair(pair_id.to_string())))?;
        if matches.next().is_some() {
            return Err(ApiError::bad_request(
                "ambiguous_pair",
                format!("pair `{pair_id}` exists under several conditions; pass `condition`"),
            ));
        }
        Ok(first)
    }

    fn context<'a>(&'a self, pair: &'a WinogradPair) -> interchange_core::Result<EffectContext<'a>> {
        EffectContext::with_traces(&self.model, pair, |side, tokens| {
            let key = (pair.pair_id.clone(), pair.condition, side, tokens.to_vec());
            if let Some(hit) = self.cache.lock().get(&key) {
                return Ok(hit);
            }
            let trace = Arc::new(forward(&self.model, tokens, &PatchSet::new())?);
            self.cache.lock().insert(key, trace.clone());
            Ok(trace)
        })
    }
}

/// Error document plus status code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn bad_request(kind: &str, message: String) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: kind.to_string(),
            message,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownPair(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"kind": self.kind, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairSummary {
    pub pair_id: String,
    pub condition: Condition,
    pub text_a: String,
    pub text_b: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairDetail {
    pub pair: WinogradPair,
    pub text_a: String,
    pub text_b: String,
    pub surfaces_a: Vec<String>,
    pub surfaces_b: Vec<String>,
    pub classes: Vec<TokenClass>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConditionQuery {
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pair_id: String,
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreResponse {
    pub pair_id: String,
    pub condition: Condition,
    pub scores: PairScores,
    pub strict: bool,
    pub weak: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterchangeRequest {
    pub pair_id: String,
    #[serde(default)]
    pub condition: Option<Condition>,
    pub site: ActivationSite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub pair_id: String,
    #[serde(default)]
    pub condition: Option<Condition>,
    pub kind: SweepKind,
    #[serde(default)]
    pub filters: SweepFilters,
    #[serde(default)]
    pub specials: Option<SpecialTokens>,
}

/// Same rows, table text and grid files that `interchange sweep` writes for
/// this pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepResponse {
    pub pair_id: String,
    pub condition: Condition,
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    pub results_tsv: String,
    pub grids: Vec<GridFile>,
}

/// Build the router.
pub fn router(state: Arc<AppState>) -> Router {
    let digest = HeaderValue::from_str(state.digest()).expect("hex digest is a valid header value");
    let name = HeaderName::from_static(MANIFEST_HEADER);
    Router::new()
        .route("/health", get(health))
        .route("/pairs", get(list_pairs))
        .route("/pairs/{id}", get(get_pair))
        .route("/manifest", get(manifest))
        .route("/score", post(score))
        .route("/interchange", post(interchange))
        .route("/sweep", post(sweep))
        .layer(axum::middleware::map_response(move |mut res: Response| {
            let (name, digest) = (name.clone(), digest.clone());
            async move {
                res.headers_mut().insert(name, digest);
                res
            }
        }))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn manifest(State(state): State<Arc<AppState>>) -> Json<RunManifest> {
    Json(state.manifest.clone())
}

async fn list_pairs(State(state): State<Arc<AppState>>) -> Json<Vec<PairSummary>> {
    Json(
        state
            .pairs
            .iter()
            .map(|p| PairSummary {
                pair_id: p.pair_id.clone(),
                condition: p.condition,
                text_a: state.vocab.render(&p.tokens_a),
                text_b: state.vocab.render(&p.tokens_b),
            })
            .collect(),
    )
}

async fn get_pair(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ConditionQuery>,
) -> ApiResult<PairDetail> {
    let pair = state.find(&id, q.condition)?;
    let classes = annotate_classes(pair, None)?;
    let surfaces = |tokens: &[TokenId]| tokens.iter().map(|&t| state.vocab.surface(t)).collect();
    Ok(Json(PairDetail {
        text_a: state.vocab.render(&pair.tokens_a),
        text_b: state.vocab.render(&pair.tokens_b),
        surfaces_a: surfaces(&pair.tokens_a),
        surfaces_b: surfaces(&pair.tokens_b),
        classes: classes.as_slice().to_vec(),
        pair: pair.clone(),
    }))
}

/// Run CPU-bound work off the async executor.
async fn blocking<T, F>(state: Arc<AppState>, work: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || work(&state))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal".into(),
            message: e.to_string(),
        })?
        .map(Json)
}

async fn score(State(state): State<Arc<AppState>>, Json(req): Json<ScoreRequest>) -> ApiResult<ScoreResponse> {
    blocking(state, move |state| {
        let pair = state.find(&req.pair_id, req.condition)?;
        let scores = state.context(pair)?.baseline();
        Ok(ScoreResponse {
            pair_id: pair.pair_id.clone(),
            condition: pair.condition,
            strict: strict_metric(&scores),
            weak: weak_metric(&scores),
            scores,
        })
    })
    .await
}

async fn interchange(
    State(state): State<Arc<AppState>>,
    Json(req): Json<InterchangeRequest>,
) -> ApiResult<EffectRecord> {
    blocking(state, move |state| {
        let pair = state.find(&req.pair_id, req.condition)?;
        Ok(state.context(pair)?.record(req.site)?)
    })
    .await
}

async fn sweep(State(state): State<Arc<AppState>>, Json(req): Json<SweepRequest>) -> ApiResult<SweepResponse> {
    blocking(state, move |state| {
        let pair = state.find(&req.pair_id, req.condition)?;
        let spec = SweepSpec {
            kind: req.kind,
            filters: req.filters,
            specials: req.specials,
        };
        let rows = spec.rows_per_pair(&state.model, pair.len())?;
        if rows > state.cell_budget {
            return Err(ApiError {
                status: StatusCode::PAYLOAD_TOO_LARGE,
                kind: "cell_budget".into(),
                message: format!(
                    "sweep would produce {rows} rows, budget is {}; narrow the filters or use the batch CLI",
                    state.cell_budget
                ),
            });
        }
        let rows = run_sweep(&state.model, std::slice::from_ref(pair), &spec)?;
        Ok(SweepResponse {
            pair_id: pair.pair_id.clone(),
            condition: pair.condition,
            kind: spec.kind,
            results_tsv: format_results(&rows),
            grids: grids_from_rows(&rows)?,
            rows,
        })
    })
    .await
}
