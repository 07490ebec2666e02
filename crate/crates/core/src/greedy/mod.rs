//! Alternating AUCH-driven training: a grid search over the entropy-model
//! parameters `α`, then one constrained quadratic program per branch for
//! `θ_k`, repeated until validation AUCH stops improving.

mod qp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use qp::{kkt_residual, objective, project_to_simplex, solve_literal, solve_regularized};

use crate::corpus::{Corpus, Dictionary, Partition, TopicTree};
use crate::error::{Error, Result};
use crate::eval::auch;
use crate::simcore::{rank_leaves_hsim, BranchWeights, HsimModel};
use crate::sparse::SparseVec;

pub const DEFAULT_GRID: [f64; 6] = [-0.5, -0.25, 0.0, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Candidate values per level, root first.
    pub alpha_grid: Vec<Vec<f64>>,
    /// `None` picks `0.1 ×` the mean number of V2 documents per leaf.
    pub psi: Option<f64>,
    pub max_outer_iters: usize,
    pub qp_tolerance: f64,
    /// Add `ψ‖θ − h‖²` instead of subtracting it.
    pub literal_penalty: bool,
    /// Rebuild the final centroids from V0 ∪ V1 ∪ V2 instead of V0 alone.
    pub refit_all: bool,
}

impl GreedyConfig {
    pub fn with_height(height: usize) -> Self {
        Self {
            alpha_grid: vec![DEFAULT_GRID.to_vec(); height],
            psi: None,
            max_outer_iters: 10,
            qp_tolerance: 1e-9,
            literal_penalty: false,
            refit_all: false,
        }
    }

    fn validate(&self, height: usize) -> Result<()> {
        if self.alpha_grid.len() != height {
            return Err(Error::Dimension(format!(
                "grid has {} levels, tree has {height}",
                self.alpha_grid.len()
            )));
        }
        if self.alpha_grid.iter().any(|g| g.is_empty()) {
            return Err(Error::invalid("every level needs at least one grid value"));
        }
        if matches!(self.psi, Some(p) if p.is_nan() || p <= 0.0) {
            return Err(Error::invalid("psi must be positive"));
        }
        Ok(())
    }
}

/// Labeled documents of the three training subsets.
#[derive(Debug, Clone, Default)]
pub struct TrainingSets<'a> {
    pub v0: Vec<(&'a SparseVec, usize)>,
    pub v1: Vec<(&'a SparseVec, usize)>,
    pub v2: Vec<(&'a SparseVec, usize)>,
}

impl<'a> TrainingSets<'a> {
    pub fn from_partition(corpus: &'a Corpus, partition: &Partition) -> Result<Self> {
        Ok(Self {
            v0: corpus.labeled_vectors(&partition.v0)?,
            v1: corpus.labeled_vectors(&partition.v1)?,
            v2: corpus.labeled_vectors(&partition.v2)?,
        })
    }

    pub fn validation(&self) -> Vec<(&SparseVec, usize)> {
        self.v1.iter().chain(&self.v2).copied().collect()
    }

    pub fn all(&self) -> Vec<(&SparseVec, usize)> {
        self.v0
            .iter()
            .chain(&self.v1)
            .chain(&self.v2)
            .copied()
            .collect()
    }
}

/// `α = 0` and every `θ_k = [1/h, …, 1/h]`.
pub fn init_parameters(height: usize, leaves: usize) -> (Vec<f64>, BranchWeights) {
    (vec![0.0; height], BranchWeights::uniform(height, leaves))
}

#[derive(Debug, Clone)]
pub struct AlphaSearch {
    pub alpha: Vec<f64>,
    pub auch: f64,
    pub model: HsimModel,
    /// Every candidate with its V1 AUCH, in enumeration order.
    pub evaluated: Vec<(Vec<f64>, f64)>,
}

/// Cartesian product of the per-level grids in lexicographic order. Levels
/// holding a single cluster have identically zero entropy features, so their
/// component is pinned to 0.
pub fn grid_candidates(tree: &TopicTree, grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let levels: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(l, g)| {
            if tree.level_size(l) == 1 {
                return vec![0.0];
            }
            let mut g = g.clone();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        })
        .collect();
    let mut out = vec![Vec::new()];
    for values in &levels {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn model_auch(model: &HsimModel, docs: &[(&SparseVec, usize)]) -> Result<f64> {
    auch(
        &|x: &SparseVec| rank_leaves_hsim(x, model),
        docs,
        model.leaf_count(),
    )
}

/// Grid search for `α` at fixed `θ`: centroids and entropies are rebuilt
/// from `v0` for every candidate, AUCH is measured on `v1`. Ties go to the
/// lexicographically smallest candidate.
pub fn fit_alpha_grid(
    base: &HsimModel,
    v0: &[(&SparseVec, usize)],
    v1: &[(&SparseVec, usize)],
    grid: &[Vec<f64>],
) -> Result<AlphaSearch> {
    let candidates = grid_candidates(&base.tree, grid);
    let fitted = candidates
        .par_iter()
        .map(|alpha| {
            let m = HsimModel::fit(
                base.dictionary.clone(),
                base.tree.clone(),
                v0,
                alpha.clone(),
                base.theta.clone(),
            )?;
            let a = model_auch(&m, v1)?;
            Ok((m, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (_, a)) in fitted.iter().enumerate() {
        if *a > fitted[best].1 {
            best = i;
        }
    }
    let evaluated = candidates
        .iter()
        .cloned()
        .zip(fitted.iter().map(|f| f.1))
        .collect();
    let (model, auch) = fitted.into_iter().nth(best).expect("grid is never empty");
    Ok(AlphaSearch {
        alpha: candidates[best].clone(),
        auch,
        model,
        evaluated,
    })
}

/// Sum of `M_kᵀΛx` over the `v2` documents of every leaf, with their counts.
fn linear_coefficients(
    model: &HsimModel,
    v2: &[(&SparseVec, usize)],
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (h, k) = (model.height(), model.leaf_count());
    let mut c = vec![vec![0.0; h]; k];
    let mut counts = vec![0; k];
    for (x, leaf) in v2 {
        let nodes = model.node_similarities(x);
        for (l, &i) in model.tree.branch(*leaf).iter().enumerate() {
            c[*leaf][l] += nodes[l][i];
        }
        counts[*leaf] += 1;
    }
    (c, counts)
}

/// `θ_k` maximizing the summed hierarchical similarity of leaf `k`'s `v2`
/// documents, regularized towards uniform. A leaf without documents keeps
/// the uniform vector.
pub fn fit_theta_qp(
    model: &HsimModel,
    v2: &[(&SparseVec, usize)],
    leaf: usize,
    psi: f64,
    config: &GreedyConfig,
) -> Result<Vec<f64>> {
    let mine: Vec<_> = v2.iter().filter(|(_, k)| *k == leaf).copied().collect();
    let (c, counts) = linear_coefficients(model, &mine);
    solve_branch(&c[leaf], counts[leaf], psi, config)
}

fn solve_branch(c: &[f64], count: usize, psi: f64, config: &GreedyConfig) -> Result<Vec<f64>> {
    let h = c.len();
    if count == 0 {
        return Ok(vec![1.0 / h as f64; h]);
    }
    if config.literal_penalty {
        return Ok(solve_literal(c, psi));
    }
    let theta = solve_regularized(c, psi);
    // the residual scales with the coefficients, so it is checked relative
    // to their magnitude
    let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let residual = kkt_residual(c, &theta, psi) / scale;
    if residual > config.qp_tolerance {
        return Err(Error::QpNotConverged { residual });
    }
    Ok(theta)
}

/// `0.1 ×` the mean number of documents per leaf, floored at 0.1.
pub fn default_psi(v2: &[(&SparseVec, usize)], leaves: usize) -> f64 {
    (0.1 * v2.len() as f64 / leaves as f64).max(0.1)
}

pub fn fit_all_thetas(
    model: &HsimModel,
    v2: &[(&SparseVec, usize)],
    psi: f64,
    config: &GreedyConfig,
) -> Result<BranchWeights> {
    let (c, counts) = linear_coefficients(model, v2);
    let thetas = c
        .par_iter()
        .zip(&counts)
        .map(|(ck, n)| solve_branch(ck, *n, psi, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchWeights(thetas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub iteration: usize,
    pub alpha: Vec<f64>,
    /// AUCH of the α search on V1.
    pub alpha_auch: f64,
    /// AUCH on V1 ∪ V2 after the θ step.
    pub validation_auch: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct GreedyFit {
    pub model: HsimModel,
    pub psi: f64,
    /// Validation AUCH of the untrained start, then one entry per iteration.
    pub initial_auch: f64,
    pub trace: Vec<GreedyStep>,
}

impl GreedyFit {
    pub fn best_auch(&self) -> f64 {
        self.trace
            .iter()
            .filter(|s| s.accepted)
            .map(|s| s.validation_auch)
            .fold(self.initial_auch, f64::max)
    }
}

/// Alternates the `α` grid search (V1) and the per-branch `θ` programs (V2),
/// keeping an iterate only when AUCH on V1 ∪ V2 does not decrease and
/// stopping once it no longer increases.
pub fn fit_greedy(
    dictionary: Dictionary,
    tree: TopicTree,
    sets: &TrainingSets<'_>,
    config: &GreedyConfig,
) -> Result<GreedyFit> {
    let (h, k) = (tree.height(), tree.leaf_count());
    config.validate(h)?;
    for (name, set) in [("V0", &sets.v0), ("V1", &sets.v1), ("V2", &sets.v2)] {
        if set.is_empty() {
            return Err(Error::InsufficientData(format!("{name} is empty")));
        }
    }
    let psi = config.psi.unwrap_or_else(|| default_psi(&sets.v2, k));
    let validation = sets.validation();
    let (alpha, theta) = init_parameters(h, k);
    let mut best = HsimModel::fit(dictionary, tree, &sets.v0, alpha, theta)?;
    let initial_auch = model_auch(&best, &validation)?;
    let mut best_auch = initial_auch;
    let mut trace = Vec::new();

    for iteration in 1..=config.max_outer_iters {
        let search = fit_alpha_grid(&best, &sets.v0, &sets.v1, &config.alpha_grid)?;
        let theta = fit_all_thetas(&search.model, &sets.v2, psi, config)?;
        let candidate = search.model.with_theta(theta)?;
        let score = model_auch(&candidate, &validation)?;
        let accepted = score >= best_auch;
        log::info!(
            "greedy iteration {iteration}: alpha {:?}, V1 AUCH {:.4}, V1+V2 AUCH {score:.4}{}",
            search.alpha,
            search.auch,
            if accepted { "" } else { " (rejected)" }
        );
        trace.push(GreedyStep {
            iteration,
            alpha: search.alpha,
            alpha_auch: search.auch,
            validation_auch: score,
            accepted,
        });
        if !accepted {
            break;
        }
        let improved = score > best_auch;
        let unchanged = candidate == best;
        best = candidate;
        best_auch = score;
        if !improved || unchanged {
            break;
        }
    }

    if config.refit_all {
        let all = sets.all();
        best = HsimModel::fit(
            best.dictionary.clone(),
            best.tree.clone(),
            &all,
            best.weights.alpha.clone(),
            best.theta.clone(),
        )?;
    }
    Ok(GreedyFit {
        model: best,
        psi,
        initial_auch,
        trace,
    })
}
