//! Versioned model files: dictionary, tree, `α`, `ι`, `λ`, `θ_k` and the
//! centroids as sparse `(level, node, word, value)` triplets, plus the VB
//! posterior when the model came from variational training.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, vectorize, Dictionary, Partition, TokenizerConfig, TopicTree};
use crate::error::{Error, Result};
use crate::simcore::{lambda_weights, BranchWeights, CentroidSet, HsimModel, Iota, WeightModel};
use crate::sparse::SparseVec;
use crate::vbayes::{normalize_row, predict_evidence, VbHyperparams, VbState, WishartUpdate};

pub const SNAPSHOT_FORMAT: &str = "hsim-snapshot/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    Untrained,
    Greedy,
    Vb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub method: TrainMethod,
    pub created: DateTime<Utc>,
    /// The training configuration as given.
    pub config: serde_json::Value,
    /// Document ids of the training subsets and the held-out test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_auch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wishart_update: Option<WishartUpdate>,
    /// Tokenizer of the training corpus, so raw text is vectorized the
    /// same way without the corpus at hand.
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
}

impl SnapshotMeta {
    pub fn new(method: TrainMethod, config: serde_json::Value) -> Self {
        Self {
            method,
            created: Utc::now(),
            config,
            partition: None,
            validation_auch: None,
            wishart_update: None,
            tokenizer: TokenizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbSnapshot {
    pub hyper: VbHyperparams,
    pub state: VbState,
    /// Ids of the unlabeled documents, in the row order of `state.p`.
    pub queue_ids: Vec<String>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub model: HsimModel,
    pub vb: Option<VbSnapshot>,
    pub meta: SnapshotMeta,
}

#[derive(Serialize, Deserialize)]
struct StoredSnapshot {
    format: String,
    meta: SnapshotMeta,
    dictionary: Dictionary,
    tree: TopicTree,
    alpha: Vec<f64>,
    iota: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    theta: Vec<Vec<f64>>,
    centroid_members: Vec<Vec<usize>>,
    /// `(level, node, word, value)` for every nonzero centroid entry.
    centroids: Vec<(usize, usize, u32, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vb: Option<VbSnapshot>,
}

impl Snapshot {
    pub fn new(model: HsimModel, meta: SnapshotMeta) -> Self {
        Self {
            model,
            vb: None,
            meta,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let levels = m.centroids.levels();
        let mut triplets = Vec::new();
        for l in 0..levels {
            for (i, mu) in m.centroids.level(l).iter().enumerate() {
                triplets.extend(
                    mu.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(w, v)| (l, i, w as u32, *v)),
                );
            }
        }
        let iota = m.iota();
        let stored = StoredSnapshot {
            format: SNAPSHOT_FORMAT.to_owned(),
            meta: self.meta.clone(),
            dictionary: m.dictionary.clone(),
            tree: m.tree.clone(),
            alpha: m.weights.alpha.clone(),
            iota: (0..iota.words()).map(|w| iota.row(w).to_vec()).collect(),
            lambda: m.weights.lambda.clone(),
            theta: m.theta.0.clone(),
            centroid_members: m.centroids.member_counts().to_vec(),
            centroids: triplets,
            vb: self.vb.clone(),
        };
        Ok(serde_json::to_string_pretty(&stored)?)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_owned(),
            message,
        };
        let s: StoredSnapshot = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if s.format != SNAPSHOT_FORMAT {
            return Err(bad(format!("unsupported snapshot format {:?}", s.format)));
        }
        let (dim, h) = (s.dictionary.len(), s.tree.height());
        let mut means: Vec<Vec<Vec<f64>>> = (0..h)
            .map(|l| vec![vec![0.0; dim]; s.tree.level_size(l)])
            .collect();
        for &(l, i, w, v) in &s.centroids {
            let slot = means
                .get_mut(l)
                .and_then(|lv| lv.get_mut(i))
                .and_then(|mu| mu.get_mut(w as usize))
                .ok_or_else(|| bad(format!("centroid entry ({l}, {i}, {w}) outside the model")))?;
            *slot = v;
        }
        if s.iota.iter().any(|r| r.len() != h) {
            return Err(bad("iota rows must have one entry per level".into()));
        }
        let iota = Iota::from_rows(s.iota, h);
        if s.alpha.len() != h || iota.words() != dim {
            return Err(bad(
                "alpha or iota disagree with the tree and dictionary".into()
            ));
        }
        let expect = lambda_weights(&s.alpha, &iota);
        if expect.len() != s.lambda.len()
            || expect
                .iter()
                .zip(&s.lambda)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(bad("stored lambda does not match 1 + alpha^T iota".into()));
        }
        let weights = WeightModel {
            alpha: s.alpha,
            iota,
            lambda: s.lambda,
        };
        let centroids = CentroidSet::from_means(means, s.centroid_members)?;
        let model = HsimModel::new(
            s.dictionary,
            s.tree,
            weights,
            centroids,
            BranchWeights(s.theta),
        )?;
        Ok(Self {
            model,
            vb: s.vb,
            meta: s.meta,
        })
    }

    /// Writes to a sibling temporary file, syncs, then renames over `path`,
    /// so readers see either the old file or the complete new one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("snapshot.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json()?.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, path)
    }

    pub fn vectorize_text(&self, text: &str) -> SparseVec {
        vectorize(
            &tokenize(text, &self.meta.tokenizer),
            &self.model.dictionary,
        )
    }

    /// Normalized predictive probabilities for a VB model: the fitted row for
    /// a queue document, otherwise computed for the given counts.
    pub fn probabilities(&self, doc_id: Option<&str>, counts: &SparseVec) -> Option<Vec<f64>> {
        let vb = self.vb.as_ref()?;
        let fitted = doc_id
            .and_then(|id| vb.queue_ids.iter().position(|q| q == id))
            .map(|t| vb.state.p[t].clone());
        let row = fitted.unwrap_or_else(|| predict_evidence(&self.model, &vb.state, counts));
        Some(normalize_row(&row))
    }
}
