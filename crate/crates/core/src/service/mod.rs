//! HTTP service for the expert workflow: ranking, the unlabeled queue,
//! durable labels, metrics and swap-based retraining.
//!
//! Every route is mounted under `/api/v1` and, as an alias, under `/api`.

mod api;
mod labels;
mod registry;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, Utc};
use serde::Serialize;
use tower_http::services::ServeDir;

pub use api::{
    ApiError, CurrentLabel, DocResponse, LabelCounters, LabelRequest, LabelResponse,
    MetricsResponse, QueueItem, QueueResponse, RankRequest, RankResponse, RankedLeaf,
    RetrainRequest, TreeLeaf, TreeResponse,
};
pub use labels::{replay, LabelEvent, LabelLog};
pub use registry::{ActiveModel, ModelRegistry, RegistryEntry};

use crate::corpus::Corpus;
use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::simcore::rank_leaves_hsim;
use crate::snapshot::Snapshot;
use crate::sparse::SparseVec;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Where retrained snapshots are written; kept in memory when unset.
    pub snapshot_dir: Option<PathBuf>,
    /// Built review console assets, served for every non-API path.
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum JobStatus {
    Running,
    Done { version: u64 },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: u64,
    pub method: crate::snapshot::TrainMethod,
    pub started: DateTime<Utc>,
    #[serde(flatten)]
    pub status: JobStatus,
}

pub struct AppState {
    corpus: Corpus,
    initial_labels: HashMap<String, usize>,
    labels: RwLock<HashMap<String, usize>>,
    /// Single writer for label events.
    log: Mutex<LabelLog>,
    pub registry: ModelRegistry,
    jobs: Mutex<Vec<Job>>,
    started: DateTime<Utc>,
    session_labels: AtomicU64,
    config: ServiceConfig,
}

impl AppState {
    /// Applies the label log on top of the corpus labels.
    pub fn new(corpus: Corpus, log: LabelLog, config: ServiceConfig) -> Result<Self> {
        let initial_labels: HashMap<String, usize> = corpus.labeled().into_iter().collect();
        for e in log.events() {
            if corpus.doc(&e.doc_id).is_none() || e.chosen_leaf >= corpus.tree.leaf_count() {
                return Err(crate::Error::invalid(format!(
                    "label log event {} refers to unknown document {:?} or leaf {}",
                    e.seq, e.doc_id, e.chosen_leaf
                )));
            }
        }
        let labels = replay(&initial_labels, log.events());
        Ok(Self {
            corpus,
            initial_labels,
            labels: RwLock::new(labels),
            log: Mutex::new(log),
            registry: ModelRegistry::new(),
            jobs: Mutex::new(Vec::new()),
            started: Utc::now(),
            session_labels: AtomicU64::new(0),
            config,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Current document labels: corpus labels plus the label log.
    pub fn labels(&self) -> HashMap<String, usize> {
        self.labels.read().expect("label lock poisoned").clone()
    }

    /// The corpus labels with the label log replayed over them; always equal
    /// to [`AppState::labels`].
    pub fn replayed_labels(&self) -> HashMap<String, usize> {
        replay(&self.initial_labels, &self.label_events())
    }

    pub fn label_events(&self) -> Vec<LabelEvent> {
        self.log
            .lock()
            .expect("log lock poisoned")
            .events()
            .to_vec()
    }

    /// Held-out report of a snapshot under the current labels.
    pub fn held_out_report(&self, snapshot: &Snapshot) -> Result<EvalReport> {
        let labels = self.labels();
        let ids: Vec<String> = match snapshot.meta.partition.as_ref() {
            Some(p) => p.test.clone(),
            None => {
                let mut all: Vec<String> = labels.keys().cloned().collect();
                all.sort();
                all
            }
        };
        let docs: Vec<(&str, &SparseVec, usize)> = ids
            .iter()
            .filter_map(|id| {
                let leaf = *labels.get(id)?;
                Some((id.as_str(), &self.corpus.doc(id)?.counts, leaf))
            })
            .collect();
        let model = &snapshot.model;
        evaluate(
            &|x: &SparseVec| rank_leaves_hsim(x, model),
            &docs,
            model.leaf_count(),
        )
    }

    /// Registers a snapshot with its held-out report; returns the version.
    pub fn register(&self, snapshot: Snapshot, path: Option<PathBuf>) -> Result<u64> {
        let report = self.held_out_report(&snapshot)?;
        Ok(self.registry.register(snapshot, path, Some(report)))
    }

    fn count_label(&self) {
        self.session_labels.fetch_add(1, Ordering::Relaxed);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/queue", get(api::queue))
        .route("/doc/{id}", get(api::doc))
        .route("/rank", post(api::rank))
        .route("/label", post(api::label))
        .route("/metrics", get(api::metrics))
        .route("/retrain", post(api::retrain))
        .route("/retrain/{id}", get(api::job))
        .route("/models", get(api::models))
        .route("/tree", get(api::tree));
    let app = Router::new().nest("/api/v1", api.clone()).nest("/api", api);
    let app = match state.config.ui_dir.clone() {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
