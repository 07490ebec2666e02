//! From a corpus to a snapshot with either trainer. Shared by the command
//! line and the service's retrain worker.

use serde::{Deserialize, Serialize};

use crate::corpus::{split, Corpus, SplitFractions};
use crate::error::Result;
use crate::greedy::{fit_greedy, GreedyConfig, TrainingSets};
use crate::simcore::{BranchWeights, HsimModel};
use crate::snapshot::{Snapshot, SnapshotMeta, TrainMethod, VbSnapshot};
use crate::sparse::SparseVec;
use crate::vbayes::{fit_em, EmConfig, VbHyperparams, VbProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub greedy: GreedyConfig,
    #[serde(default)]
    pub vb: VbSettings,
    pub em: EmConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VbPrior {
    /// [`VbHyperparams::scaled`] for the number of training documents.
    #[default]
    Scaled,
    /// [`VbHyperparams::defaults`].
    Unit,
}

/// Prior choice plus optional overrides of single hyperparameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VbSettings {
    #[serde(default)]
    pub prior: VbPrior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl VbSettings {
    pub fn resolve(&self, height: usize, labeled: usize) -> VbHyperparams {
        let base = match self.prior {
            VbPrior::Scaled => VbHyperparams::scaled(height, labeled),
            VbPrior::Unit => VbHyperparams::defaults(height),
        };
        VbHyperparams {
            a: self.a.unwrap_or(base.a),
            b: self.b.unwrap_or(base.b),
            nu: self.nu.unwrap_or(base.nu),
            ..base
        }
    }
}

impl TrainConfig {
    pub fn new(method: TrainMethod, height: usize) -> Self {
        Self {
            method,
            seed: 1,
            fractions: SplitFractions::QUARTERS,
            greedy: GreedyConfig::with_height(height),
            vb: VbSettings::default(),
            em: EmConfig::default(),
        }
    }
}

/// Splits the labeled documents, trains, and returns the snapshot with the
/// partition recorded. `extra_unlabeled` joins the corpus's own unlabeled
/// documents in the VB queue.
pub fn train(
    corpus: &Corpus,
    extra_unlabeled: &[(String, SparseVec)],
    config: &TrainConfig,
) -> Result<Snapshot> {
    let tree = &corpus.tree;
    let partition = split(
        &corpus.labeled(),
        tree.leaf_count(),
        config.fractions,
        config.seed,
    )?;
    for w in &partition.warnings {
        log::warn!("{w}");
    }
    let partition = partition.partition;
    let sets = TrainingSets::from_partition(corpus, &partition)?;
    let mut meta = SnapshotMeta::new(config.method, serde_json::to_value(config)?);

    let snapshot = match config.method {
        TrainMethod::Untrained => {
            let h = tree.height();
            let model = HsimModel::fit(
                corpus.dictionary.clone(),
                tree.clone(),
                &sets.v0,
                vec![0.0; h],
                BranchWeights::uniform(h, tree.leaf_count()),
            )?;
            Snapshot::new(model, meta)
        }
        TrainMethod::Greedy => {
            let fit = fit_greedy(
                corpus.dictionary.clone(),
                tree.clone(),
                &sets,
                &config.greedy,
            )?;
            meta.validation_auch = Some(fit.best_auch());
            Snapshot::new(fit.model, meta)
        }
        TrainMethod::Vb => {
            let labeled = sets.all();
            let mut queue_ids: Vec<String> = corpus
                .unlabeled_ids()
                .iter()
                .map(|s| s.to_string())
                .collect();
            let mut unlabeled: Vec<&SparseVec> = queue_ids
                .iter()
                .map(|id| &corpus.doc(id).expect("unlabeled id from corpus").counts)
                .collect();
            for (id, x) in extra_unlabeled {
                queue_ids.push(id.clone());
                unlabeled.push(x);
            }
            let hyper = config.vb.resolve(tree.height(), labeled.len());
            hyper.validate(tree.height())?;
            let problem = VbProblem::new(
                corpus.dictionary.clone(),
                tree.clone(),
                &labeled,
                &unlabeled,
            )?;
            let fit = fit_em(&problem, &hyper, config.em)?;
            log::info!(
                "variational EM converged in {} iterations, surrogate {:.6}",
                fit.iterations,
                fit.trace
                    .last()
                    .map_or(fit.initial_surrogate, |r| r.surrogate)
            );
            meta.wishart_update = Some(hyper.wishart_update);
            let model = fit.state.to_model(&problem.model)?;
            Snapshot {
                model,
                vb: Some(VbSnapshot {
                    hyper,
                    state: fit.state,
                    queue_ids,
                    iterations: fit.iterations,
                    converged: fit.converged,
                }),
                meta,
            }
        }
    };
    Ok(Snapshot {
        meta: SnapshotMeta {
            partition: Some(partition),
            tokenizer: corpus.config.tokenizer.clone(),
            ..snapshot.meta
        },
        ..snapshot
    })
}
