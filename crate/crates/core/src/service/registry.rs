//! One active snapshot behind a lock-protected `Arc`: readers clone the
//! pointer and keep a consistent model for the whole request, a retrain
//! swaps the pointer in one step.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::eval::EvalReport;
use crate::snapshot::{Snapshot, TrainMethod};

#[derive(Debug)]
pub struct ActiveModel {
    pub version: u64,
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegistryEntry {
    pub version: u64,
    pub method: TrainMethod,
    pub created: DateTime<Utc>,
    pub registered: DateTime<Utc>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Held-out report at registration time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

#[derive(Debug, Default)]
pub struct ModelRegistry {
    active: RwLock<Option<Arc<ActiveModel>>>,
    history: Mutex<Vec<RegistryEntry>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> Option<Arc<ActiveModel>> {
        self.active.read().expect("registry lock poisoned").clone()
    }

    /// Makes `snapshot` the active model and returns its version.
    pub fn register(
        &self,
        snapshot: Snapshot,
        path: Option<PathBuf>,
        report: Option<EvalReport>,
    ) -> u64 {
        let mut history = self.history.lock().expect("registry lock poisoned");
        let version = history.last().map_or(1, |e| e.version + 1);
        history.push(RegistryEntry {
            version,
            method: snapshot.meta.method,
            created: snapshot.meta.created,
            registered: Utc::now(),
            config: snapshot.meta.config.clone(),
            path,
            report,
        });
        *self.active.write().expect("registry lock poisoned") =
            Some(Arc::new(ActiveModel { version, snapshot }));
        version
    }

    pub fn history(&self) -> Vec<RegistryEntry> {
        self.history.lock().expect("registry lock poisoned").clone()
    }
}
