//! Ranking quality: expert ranks, the cumulative rank histogram and the area
//! under it (AUCH), DCG@k and p@k, and cluster-similarity diagnostics.

mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_report, ReportFormat};

use crate::error::{Error, Result};
use crate::simcore::{weighted_similarity, HsimModel, RankedList};
use crate::sparse::SparseVec;

/// Anything that maps a document to a leaf permutation.
pub trait Ranker: Sync {
    fn rank(&self, counts: &SparseVec) -> RankedList;
}

impl<F: ?Sized> Ranker for F
where
    F: Fn(&SparseVec) -> RankedList + Sync,
{
    fn rank(&self, counts: &SparseVec) -> RankedList {
        self(counts)
    }
}

/// 1-based position of the expert leaf.
pub fn expert_rank(ranked: &RankedList, expert_leaf: usize) -> Result<usize> {
    ranked
        .rank_of(expert_leaf)
        .ok_or_else(|| Error::UnknownLeaf(expert_leaf.to_string()))
}

/// Expert rank of every labeled document, in input order.
pub fn expert_ranks<R: Ranker + ?Sized>(
    ranker: &R,
    docs: &[(&SparseVec, usize)],
) -> Result<Vec<usize>> {
    docs.par_iter()
        .map(|(x, k)| expert_rank(&ranker.rank(x), *k))
        .collect()
}

/// `counts[k-1] = #{n : pos_n ≤ k}` for `k = 1..=leaf_count`.
pub fn histogram_from_ranks(ranks: &[usize], leaf_count: usize) -> Vec<usize> {
    let mut at = vec![0usize; leaf_count];
    for &r in ranks {
        assert!(
            (1..=leaf_count).contains(&r),
            "rank {r} outside 1..={leaf_count}"
        );
        at[r - 1] += 1;
    }
    let mut acc = 0;
    at.iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect()
}

/// Area under the cumulative histogram normalized by `K_h·|D|`.
pub fn auch_from_ranks(ranks: &[usize], leaf_count: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let area: usize = histogram_from_ranks(ranks, leaf_count).iter().sum();
    area as f64 / (leaf_count * ranks.len()) as f64
}

pub fn cumulative_histogram<R: Ranker + ?Sized>(
    ranker: &R,
    docs: &[(&SparseVec, usize)],
    leaf_count: usize,
) -> Result<Vec<usize>> {
    Ok(histogram_from_ranks(
        &expert_ranks(ranker, docs)?,
        leaf_count,
    ))
}

pub fn auch<R: Ranker + ?Sized>(
    ranker: &R,
    docs: &[(&SparseVec, usize)],
    leaf_count: usize,
) -> Result<f64> {
    Ok(auch_from_ranks(&expert_ranks(ranker, docs)?, leaf_count))
}

/// DCG@k with a single relevant leaf at rank `j`: 1 at `j = 1`,
/// `1/log₂ j` for `2 ≤ j ≤ k`, else 0.
pub fn dcg_at(ranked: &RankedList, expert_leaf: usize, k: usize) -> Result<f64> {
    Ok(dcg_for_rank(expert_rank(ranked, expert_leaf)?, k))
}

pub fn p_at(ranked: &RankedList, expert_leaf: usize, k: usize) -> Result<f64> {
    Ok(p_for_rank(expert_rank(ranked, expert_leaf)?, k))
}

pub fn dcg_for_rank(j: usize, k: usize) -> f64 {
    match j {
        1 => 1.0,
        j if j <= k => 1.0 / (j as f64).log2(),
        _ => 0.0,
    }
}

pub fn p_for_rank(j: usize, k: usize) -> f64 {
    if j <= k {
        1.0 / k as f64
    } else {
        0.0
    }
}

/// Cosine similarity between the centroids of every pair of nodes on a
/// level, under the model's `Λ`.
pub fn pairwise_cluster_similarity(model: &HsimModel, level: usize) -> Vec<Vec<f64>> {
    let mus = model.centroids.level(level);
    let lambda = model.lambda();
    mus.iter()
        .map(|a| {
            mus.iter()
                .map(|b| weighted_similarity(a, b, lambda))
                .collect()
        })
        .collect()
}

/// `μ_iᵀΛμ_j` for every pair of nodes on a level. With `Λ`-normalized
/// members this is the average similarity over all document pairs drawn
/// from the two clusters (self-pairs included on the diagonal).
pub fn mean_pair_similarity(model: &HsimModel, level: usize) -> Vec<Vec<f64>> {
    let mus = model.centroids.level(level);
    let lambda = model.lambda();
    mus.iter()
        .map(|a| {
            mus.iter()
                .map(|b| {
                    a.iter()
                        .zip(b)
                        .zip(lambda)
                        .map(|((x, y), l)| x * l * y)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Mean of the diagonal and mean of the off-diagonal entries.
pub fn diagonal_contrast(matrix: &[Vec<f64>]) -> (f64, f64) {
    let n = matrix.len();
    let diag: f64 = (0..n).map(|i| matrix[i][i]).sum::<f64>() / n as f64;
    if n < 2 {
        return (diag, 0.0);
    }
    let off: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
        .map(|(i, j)| matrix[i][j])
        .sum::<f64>()
        / (n * (n - 1)) as f64;
    (diag, off)
}

pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub leaf_count: usize,
    /// Cumulative counts for `k = 1..=leaf_count`.
    pub histogram: Vec<usize>,
    pub auch: f64,
    /// Mean DCG@k over documents.
    pub dcg_at: BTreeMap<usize, f64>,
    /// Mean p@k over documents.
    pub p_at: BTreeMap<usize, f64>,
    /// `(document id, expert rank)`.
    pub ranks: Vec<(String, usize)>,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<(String, usize)>, leaf_count: usize, cutoffs: &[usize]) -> Self {
        let raw: Vec<usize> = ranks.iter().map(|(_, r)| *r).collect();
        let n = raw.len().max(1) as f64;
        let mean = |f: &dyn Fn(usize) -> f64| raw.iter().map(|&j| f(j)).sum::<f64>() / n;
        let dcg_at = cutoffs
            .iter()
            .map(|&k| (k, mean(&|j| dcg_for_rank(j, k))))
            .collect();
        let p_at = cutoffs
            .iter()
            .map(|&k| (k, mean(&|j| p_for_rank(j, k))))
            .collect();
        Self {
            leaf_count,
            histogram: histogram_from_ranks(&raw, leaf_count),
            auch: auch_from_ranks(&raw, leaf_count),
            dcg_at,
            p_at,
            ranks,
        }
    }

    pub fn documents(&self) -> usize {
        self.ranks.len()
    }

    /// `(k, fraction of documents with expert rank ≤ k)`: the envelope curve.
    pub fn envelope(&self) -> Vec<(usize, f64)> {
        let n = self.documents().max(1) as f64;
        self.histogram
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, *c as f64 / n))
            .collect()
    }
}

/// Ranks every `(id, counts, expert leaf)` triple and summarizes.
pub fn evaluate<R: Ranker + ?Sized>(
    ranker: &R,
    docs: &[(&str, &SparseVec, usize)],
    leaf_count: usize,
) -> Result<EvalReport> {
    let ranks = docs
        .par_iter()
        .map(|(id, x, k)| Ok(((*id).to_owned(), expert_rank(&ranker.rank(x), *k)?)))
        .collect::<Result<Vec<_>>>()?;
    let cutoffs: Vec<usize> = DEFAULT_CUTOFFS
        .iter()
        .copied()
        .filter(|k| *k <= leaf_count)
        .collect();
    Ok(EvalReport::from_ranks(ranks, leaf_count, &cutoffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn list(order: &[usize]) -> RankedList {
        RankedList {
            order: order.to_vec(),
            scores: vec![0.0; order.len()],
        }
    }

    #[test]
    fn expert_rank_cases() {
        assert_eq!(expert_rank(&list(&[0, 1, 2]), 0).unwrap(), 1);
        assert_eq!(expert_rank(&list(&[1, 2, 3, 4, 0]), 0).unwrap(), 5);
        assert_eq!(expert_rank(&list(&[2, 0, 1]), 1).unwrap(), 3);
        assert!(matches!(
            expert_rank(&list(&[0, 1]), 7),
            Err(Error::UnknownLeaf(_))
        ));
    }

    #[test]
    fn histogram_cases() {
        assert_eq!(histogram_from_ranks(&[1, 1, 1], 3), [3, 3, 3]);
        assert_eq!(histogram_from_ranks(&[3, 3], 3), [0, 0, 2]);
        assert_eq!(histogram_from_ranks(&[1, 2, 2], 3), [1, 3, 3]);
    }

    #[test]
    fn auch_cases() {
        assert_eq!(auch_from_ranks(&[1; 5], 4), 1.0);
        assert_abs_diff_eq!(auch_from_ranks(&[4; 5], 4), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(auch_from_ranks(&[1, 2, 2], 3), 7.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn dcg_and_precision() {
        let r = list(&[0, 1, 2, 3, 4]);
        assert_eq!(dcg_at(&r, 0, 1).unwrap(), 1.0);
        assert_eq!(p_at(&r, 0, 1).unwrap(), 1.0);
        assert_eq!(dcg_at(&r, 3, 3).unwrap(), 0.0);
        assert_eq!(p_at(&r, 3, 3).unwrap(), 0.0);
        assert_eq!(dcg_at(&r, 1, 5).unwrap(), 1.0);
        assert_abs_diff_eq!(p_at(&r, 1, 5).unwrap(), 0.2);
        assert_abs_diff_eq!(dcg_at(&r, 3, 5).unwrap(), 0.5);
    }

    #[test]
    fn contrast() {
        let m = vec![vec![1.0, 0.2], vec![0.4, 3.0]];
        assert_eq!(diagonal_contrast(&m), (2.0, 0.30000000000000004));
    }

    #[test]
    fn report_summary() {
        let rep = EvalReport::from_ranks(
            vec![("a".into(), 1), ("b".into(), 2), ("c".into(), 2)],
            3,
            &[1, 3],
        );
        assert_abs_diff_eq!(rep.auch, 7.0 / 9.0, epsilon = 1e-15);
        assert_eq!(rep.histogram, [1, 3, 3]);
        assert_abs_diff_eq!(rep.p_at[&1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(rep.envelope().last().unwrap().1, 1.0);
    }
}
