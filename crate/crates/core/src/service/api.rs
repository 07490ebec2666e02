//! Request handlers and the records they exchange.

use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AppState, Job, JobStatus, LabelEvent, RegistryEntry};
use crate::corpus::TreeSpec;
use crate::eval::EvalReport;
use crate::simcore::RankedList;
use crate::snapshot::{Snapshot, TrainMethod};
use crate::sparse::SparseVec;
use crate::train::{train, TrainConfig};

/// Words of the document text shown in queue summaries.
const SUMMARY_WORDS: usize = 24;

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub error: String,
    /// Set on 409: who holds the current label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_by: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            labeled_by: None,
        }
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no model is registered")
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    fn unprocessable(what: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, what)
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLeaf {
    pub leaf: usize,
    pub name: String,
    /// Node names from the root down to the leaf.
    pub path: Vec<String>,
    pub score: f64,
    /// Predictive probability; VB-trained models only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankRequest {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub doc_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub model_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    /// Every leaf, best first.
    pub ranking: Vec<RankedLeaf>,
    /// Set when the document had no dictionary words; the ranking is then
    /// the tie-broken order by leaf index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub doc_id: String,
    pub summary: String,
    /// Difference between the two best scores; small means ambiguous.
    pub margin: f64,
    pub top: Vec<RankedLeaf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub model_version: u64,
    pub total: usize,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentLabel {
    pub leaf: usize,
    pub name: String,
    pub path: Vec<String>,
    /// Expert of the latest label event; `None` for labels from the corpus.
    pub labeled_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocResponse {
    pub doc_id: String,
    pub text: String,
    pub label: Option<CurrentLabel>,
    /// Present once a model is registered.
    pub ranking: Option<RankResponse>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub doc_id: String,
    pub chosen_leaf: usize,
    /// Leaf order the expert saw; the active model's ranking when omitted.
    #[serde(default)]
    pub offered_permutation: Option<Vec<usize>>,
    pub expert_id: String,
    #[serde(default, rename = "override")]
    pub is_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub seq: u64,
    pub doc_id: String,
    pub chosen_leaf: usize,
    /// Unlabeled documents left.
    pub queue_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounters {
    pub labeled: usize,
    pub unlabeled: usize,
    /// Events in the label log, including earlier sessions.
    pub logged: usize,
    pub session: u64,
    pub session_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub model_version: u64,
    pub method: TrainMethod,
    /// Held-out report computed when the model was registered.
    pub report: Option<EvalReport>,
    pub labels: LabelCounters,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetrainRequest {
    #[serde(default)]
    pub method: Option<TrainMethod>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Full configuration; `method` and `seed` above override its fields.
    #[serde(default)]
    pub config: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLeaf {
    pub leaf: usize,
    pub name: String,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeResponse {
    pub tree: TreeSpec,
    pub leaves: Vec<TreeLeaf>,
}

fn path_of(state: &AppState, leaf: usize) -> Vec<String> {
    state
        .corpus
        .tree
        .branch_names(leaf)
        .into_iter()
        .map(str::to_owned)
        .collect()
}

fn ranked_leaves(state: &AppState, ranked: &RankedList, probs: Option<&[f64]>) -> Vec<RankedLeaf> {
    ranked
        .order
        .iter()
        .zip(&ranked.scores)
        .map(|(&k, &score)| RankedLeaf {
            leaf: k,
            name: state.corpus.tree.leaf(k).name.clone(),
            path: path_of(state, k),
            score,
            probability: probs.map(|p| p[k]),
        })
        .collect()
}

/// Ranking of one document; empty input gets all-zero scores so the tie
/// rule alone fixes the order.
fn rank_counts(
    state: &AppState,
    snapshot: &Snapshot,
    version: u64,
    doc_id: Option<&str>,
    x: &SparseVec,
) -> RankResponse {
    let empty = x.is_empty();
    let scores = if empty {
        vec![0.0; snapshot.model.leaf_count()]
    } else {
        snapshot.model.scores(x)
    };
    let ranked = RankedList::from_scores(&scores);
    let probs = snapshot.probabilities(doc_id, x);
    RankResponse {
        model_version: version,
        doc_id: doc_id.map(str::to_owned),
        ranking: ranked_leaves(state, &ranked, probs.as_deref()),
        warning: empty
            .then(|| "no dictionary words in the document; leaves are in index order".to_owned()),
    }
}

pub(super) async fn rank(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RankRequest>,
) -> Response {
    let Some(active) = state.registry.active() else {
        return ApiError::no_model().into_response();
    };
    let (doc_id, owned);
    let x = match (&req.doc_id, &req.text) {
        (Some(id), _) => match state.corpus.doc(id) {
            Some(d) => {
                doc_id = Some(id.as_str());
                &d.counts
            }
            None => return ApiError::not_found(format!("unknown document {id:?}")).into_response(),
        },
        (None, Some(text)) => {
            doc_id = None;
            owned = state.corpus.vectorize_text(text);
            &owned
        }
        (None, None) => {
            return ApiError::unprocessable("give either text or doc_id").into_response()
        }
    };
    let resp = rank_counts(&state, &active.snapshot, active.version, doc_id, x);
    let status = if resp.warning.is_some() {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    };
    (status, Json(resp)).into_response()
}

fn summary(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut s = words[..words.len().min(SUMMARY_WORDS)].join(" ");
    if words.len() > SUMMARY_WORDS {
        s.push_str(" ...");
    }
    s
}

fn unlabeled_count(state: &AppState) -> usize {
    let labels = state.labels.read().expect("label lock poisoned");
    state
        .corpus
        .docs
        .iter()
        .filter(|d| !labels.contains_key(&d.id))
        .count()
}

pub(super) async fn queue(
    State(state): State<Arc<AppState>>,
    Query(params): Query<QueueParams>,
) -> ApiResult<QueueResponse> {
    let active = state.registry.active().ok_or_else(ApiError::no_model)?;
    let labels = state.labels();
    let mut items: Vec<QueueItem> = state
        .corpus
        .docs
        .par_iter()
        .filter(|d| !labels.contains_key(&d.id))
        .map(|d| {
            let ranked = rank_counts(
                &state,
                &active.snapshot,
                active.version,
                Some(&d.id),
                &d.counts,
            );
            let margin = match ranked.ranking.as_slice() {
                [a, b, ..] => a.score - b.score,
                _ => 0.0,
            };
            let mut top = ranked.ranking;
            top.truncate(3);
            QueueItem {
                doc_id: d.id.clone(),
                summary: summary(&d.text),
                margin,
                top,
            }
        })
        .collect();
    items.sort_by(|a, b| {
        a.margin
            .total_cmp(&b.margin)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let total = items.len();
    if let Some(n) = params.limit {
        items.truncate(n);
    }
    Ok(Json(QueueResponse {
        model_version: active.version,
        total,
        items,
    }))
}

fn current_label(state: &AppState, doc_id: &str) -> Option<CurrentLabel> {
    let leaf = *state
        .labels
        .read()
        .expect("label lock poisoned")
        .get(doc_id)?;
    let labeled_by = state
        .log
        .lock()
        .expect("log lock poisoned")
        .events()
        .iter()
        .rev()
        .find(|e| e.doc_id == doc_id)
        .map(|e| e.expert_id.clone());
    Some(CurrentLabel {
        leaf,
        name: state.corpus.tree.leaf(leaf).name.clone(),
        path: path_of(state, leaf),
        labeled_by,
    })
}

pub(super) async fn doc(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<DocResponse> {
    let d = state
        .corpus
        .doc(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown document {id:?}")))?;
    let ranking = state
        .registry
        .active()
        .map(|a| rank_counts(&state, &a.snapshot, a.version, Some(&id), &d.counts));
    Ok(Json(DocResponse {
        doc_id: id.clone(),
        text: d.text.clone(),
        label: current_label(&state, &id),
        ranking,
    }))
}

pub(super) async fn label(
    State(state): State<Arc<AppState>>,
    Json(req): Json<LabelRequest>,
) -> ApiResult<LabelResponse> {
    let d = state
        .corpus
        .doc(&req.doc_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown document {:?}", req.doc_id)))?;
    let leaves = state.corpus.tree.leaf_count();
    if req.chosen_leaf >= leaves {
        return Err(ApiError::unprocessable(format!(
            "leaf {} out of range ({leaves} leaves)",
            req.chosen_leaf
        )));
    }
    if req.expert_id.trim().is_empty() {
        return Err(ApiError::unprocessable("expert_id is empty"));
    }
    let offered = match req.offered_permutation {
        Some(p) => {
            let mut seen = vec![false; leaves];
            if p.iter()
                .any(|&k| k >= leaves || std::mem::replace(&mut seen[k], true))
            {
                return Err(ApiError::unprocessable(
                    "offered_permutation has unknown or repeated leaves",
                ));
            }
            p
        }
        None => {
            let active = state.registry.active().ok_or_else(ApiError::no_model)?;
            RankedList::from_scores(&active.snapshot.model.scores(&d.counts)).order
        }
    };
    if !offered.contains(&req.chosen_leaf) {
        return Err(ApiError::unprocessable(
            "chosen_leaf is not in offered_permutation",
        ));
    }

    // the log lock serializes writers; the label map is updated only after
    // the event is durable
    let mut log = state.log.lock().expect("log lock poisoned");
    let already = state
        .labels
        .read()
        .expect("label lock poisoned")
        .contains_key(&req.doc_id);
    if already && !req.is_override {
        let labeled_by = log
            .events()
            .iter()
            .rev()
            .find(|e| e.doc_id == req.doc_id)
            .map_or_else(|| "corpus".to_owned(), |e| e.expert_id.clone());
        return Err(ApiError {
            labeled_by: Some(labeled_by),
            ..ApiError::new(
                StatusCode::CONFLICT,
                format!("document {:?} is already labeled", req.doc_id),
            )
        });
    }
    let event = log.append(LabelEvent {
        seq: 0,
        doc_id: req.doc_id.clone(),
        chosen_leaf: req.chosen_leaf,
        offered_permutation: offered,
        expert_id: req.expert_id,
        timestamp: Utc::now(),
        is_override: req.is_override,
    })?;
    state
        .labels
        .write()
        .expect("label lock poisoned")
        .insert(event.doc_id.clone(), event.chosen_leaf);
    drop(log);
    state.count_label();
    Ok(Json(LabelResponse {
        seq: event.seq,
        doc_id: event.doc_id,
        chosen_leaf: event.chosen_leaf,
        queue_length: unlabeled_count(&state),
    }))
}

pub(super) async fn metrics(State(state): State<Arc<AppState>>) -> ApiResult<MetricsResponse> {
    let active = state.registry.active().ok_or_else(ApiError::no_model)?;
    let report = state
        .registry
        .history()
        .into_iter()
        .find(|e| e.version == active.version)
        .and_then(|e| e.report);
    let labeled = state.labels.read().expect("label lock poisoned").len();
    let session = state.session_labels.load(Ordering::Relaxed);
    let hours = (Utc::now() - state.started).num_milliseconds().max(1) as f64 / 3.6e6;
    Ok(Json(MetricsResponse {
        model_version: active.version,
        method: active.snapshot.meta.method,
        report,
        labels: LabelCounters {
            labeled,
            unlabeled: unlabeled_count(&state),
            logged: state.log.lock().expect("log lock poisoned").events().len(),
            session,
            session_per_hour: session as f64 / hours,
        },
    }))
}

fn retrain_config(
    state: &AppState,
    active: &Snapshot,
    req: RetrainRequest,
) -> Result<TrainConfig, ApiError> {
    let mut config = match req.config {
        Some(c) => c,
        // start from the active model's own settings when they parse
        None => serde_json::from_value::<TrainConfig>(active.meta.config.clone())
            .unwrap_or_else(|_| TrainConfig::new(TrainMethod::Greedy, state.corpus.tree.height())),
    };
    if let Some(m) = req.method {
        config.method = m;
    }
    if let Some(s) = req.seed {
        config.seed = s;
    }
    if config.greedy.alpha_grid.len() != state.corpus.tree.height() {
        return Err(ApiError::unprocessable(
            "alpha grid needs one row per tree level",
        ));
    }
    Ok(config)
}

pub(super) async fn retrain(
    State(state): State<Arc<AppState>>,
    body: Option<Json<RetrainRequest>>,
) -> Response {
    let Some(active) = state.registry.active() else {
        return ApiError::no_model().into_response();
    };
    let config = match retrain_config(
        &state,
        &active.snapshot,
        body.map(|b| b.0).unwrap_or_default(),
    ) {
        Ok(c) => c,
        Err(e) => return e.into_response(),
    };
    let job = {
        let mut jobs = state.jobs.lock().expect("job lock poisoned");
        if jobs.iter().any(|j| matches!(j.status, JobStatus::Running)) {
            return ApiError::new(StatusCode::CONFLICT, "a retrain is already running")
                .into_response();
        }
        let job = Job {
            id: jobs.len() as u64 + 1,
            method: config.method,
            started: Utc::now(),
            status: JobStatus::Running,
        };
        jobs.push(job.clone());
        job
    };
    let worker = Arc::clone(&state);
    let id = job.id;
    tokio::task::spawn_blocking(move || {
        let status = match run_retrain(&worker, &config) {
            Ok(version) => JobStatus::Done { version },
            Err(e) => {
                log::error!("retrain job {id} failed: {e}");
                JobStatus::Failed {
                    error: e.to_string(),
                }
            }
        };
        let mut jobs = worker.jobs.lock().expect("job lock poisoned");
        if let Some(j) = jobs.iter_mut().find(|j| j.id == id) {
            j.status = status;
        }
    });
    (StatusCode::ACCEPTED, Json(job)).into_response()
}

fn run_retrain(state: &AppState, config: &TrainConfig) -> crate::Result<u64> {
    let corpus = state.corpus.with_labels(&state.labels())?;
    let snapshot = train(&corpus, &[], config)?;
    let path = match &state.config.snapshot_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let next = state.registry.history().last().map_or(1, |e| e.version + 1);
            let p = dir.join(format!(
                "model-v{next}-{}.snapshot",
                Utc::now().format("%Y%m%dT%H%M%S")
            ));
            snapshot.save(&p)?;
            Some(p)
        }
        None => None,
    };
    state.register(snapshot, path)
}

pub(super) async fn job(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Job> {
    state
        .jobs
        .lock()
        .expect("job lock poisoned")
        .iter()
        .find(|j| j.id == id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))
}

pub(super) async fn models(State(state): State<Arc<AppState>>) -> Json<Vec<RegistryEntry>> {
    Json(state.registry.history())
}

pub(super) async fn tree(State(state): State<Arc<AppState>>) -> Json<TreeResponse> {
    let tree = &state.corpus.tree;
    Json(TreeResponse {
        tree: tree.to_spec(),
        leaves: (0..tree.leaf_count())
            .map(|k| TreeLeaf {
                leaf: k,
                name: tree.leaf(k).name.clone(),
                path: path_of(&state, k),
            })
            .collect(),
    })
}
