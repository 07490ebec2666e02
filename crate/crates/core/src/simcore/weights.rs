//! Entropy-derived word importance.

use serde::{Deserialize, Serialize};

use super::centroids::CentroidSet;
use crate::corpus::TopicTree;
use crate::error::Result;
use crate::sparse::SparseVec;

/// Lower bound applied to every `λ_m`, keeping `Λ` positive definite.
pub const LAMBDA_MIN: f64 = 1e-6;

/// `|W| × h` matrix of `ι_{ml} = ln(1 + H^l(w_m))`, row-major by word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iota {
    words: usize,
    levels: usize,
    data: Vec<f64>,
}

impl Iota {
    pub fn zeros(words: usize, levels: usize) -> Self {
        Self {
            words,
            levels,
            data: vec![0.0; words * levels],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, levels: usize) -> Self {
        let words = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), words * levels, "ragged iota rows");
        Self {
            words,
            levels,
            data,
        }
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.levels..(m + 1) * self.levels]
    }

    pub fn get(&self, m: usize, level: usize) -> f64 {
        self.data[m * self.levels + level]
    }

    pub fn column_is_zero(&self, level: usize) -> bool {
        (0..self.words).all(|m| self.get(m, level) == 0.0)
    }
}

/// `α`, `ι` and the derived diagonal of `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub alpha: Vec<f64>,
    pub iota: Iota,
    pub lambda: Vec<f64>,
}

impl WeightModel {
    /// `α = 0`, so every word weighs 1.
    pub fn uniform(words: usize, levels: usize) -> Self {
        Self {
            alpha: vec![0.0; levels],
            iota: Iota::zeros(words, levels),
            lambda: vec![1.0; words],
        }
    }

    pub fn new(alpha: Vec<f64>, iota: Iota) -> Self {
        let lambda = lambda_weights(&alpha, &iota);
        Self {
            alpha,
            iota,
            lambda,
        }
    }
}

/// Distribution of word `m` over the clusters of one level, estimated from
/// the centroids' `m`-th components.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDistribution {
    pub p: Vec<f64>,
    /// The word is absent from every centroid; `p` is uniform.
    pub uniform_fallback: bool,
}

pub fn word_cluster_distribution(level_centroids: &[Vec<f64>], m: usize) -> WordDistribution {
    let k = level_centroids.len();
    let raw: Vec<f64> = level_centroids.iter().map(|mu| mu[m].max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        WordDistribution {
            p: raw.iter().map(|v| v / total).collect(),
            uniform_fallback: false,
        }
    } else {
        WordDistribution {
            p: vec![1.0 / k as f64; k],
            uniform_fallback: true,
        }
    }
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn word_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
    h.max(0.0)
}

/// `ι` computed from an existing set of centroids.
pub fn entropy_features_from_centroids(centroids: &CentroidSet) -> Iota {
    let words = centroids.dim();
    let levels = centroids.levels();
    let mut data = vec![0.0; words * levels];
    for level in 0..levels {
        let level_mu = centroids.level(level);
        for m in 0..words {
            let p = word_cluster_distribution(level_mu, m);
            data[m * levels + level] = word_entropy(&p.p).ln_1p();
        }
    }
    Iota {
        words,
        levels,
        data,
    }
}

/// Builds centroids under `lambda` from labeled documents and derives `ι`.
pub fn entropy_features<'a, I>(
    docs: I,
    tree: &TopicTree,
    dim: usize,
    lambda: &[f64],
) -> Result<Iota>
where
    I: IntoIterator<Item = (&'a SparseVec, usize)>,
{
    let centroids = CentroidSet::from_documents(docs, tree, dim, lambda)?;
    Ok(entropy_features_from_centroids(&centroids))
}

/// `λ_m = 1 + αᵀι_m`, clamped below at [`LAMBDA_MIN`].
pub fn lambda_weights(alpha: &[f64], iota: &Iota) -> Vec<f64> {
    assert_eq!(
        alpha.len(),
        iota.levels(),
        "alpha length must equal tree height"
    );
    let mut clamped = 0usize;
    let lambda = (0..iota.words())
        .map(|m| {
            let raw = 1.0
                + alpha
                    .iter()
                    .zip(iota.row(m))
                    .map(|(a, i)| a * i)
                    .sum::<f64>();
            if raw < LAMBDA_MIN {
                clamped += 1;
                LAMBDA_MIN
            } else {
                raw
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("clamped {clamped} word weight(s) to {LAMBDA_MIN:e} for alpha {alpha:?}");
    }
    lambda
}
