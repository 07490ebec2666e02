use serde::{Deserialize, Serialize};

use super::centroids::CentroidSet;
use super::similarity::normalize;
use super::weights::{entropy_features_from_centroids, Iota, WeightModel};
use crate::corpus::{Dictionary, TopicTree};
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

/// Leaves in relevance order with their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Sorts leaves by score, descending; ties go to the lower leaf index.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&k| scores[k]).collect();
        Self {
            order,
            scores: sorted,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based position of `leaf`.
    pub fn rank_of(&self, leaf: usize) -> Option<usize> {
        self.order.iter().position(|&k| k == leaf).map(|p| p + 1)
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.order.len()];
        self.order
            .iter()
            .all(|&k| k < seen.len() && !std::mem::replace(&mut seen[k], true))
    }

    pub fn top(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }
}

/// Per-leaf weights over the levels of its branch, root first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWeights(pub Vec<Vec<f64>>);

impl BranchWeights {
    pub fn uniform(height: usize, leaves: usize) -> Self {
        Self(vec![vec![1.0 / height as f64; height]; leaves])
    }

    /// All weight on the leaf level: plain document-to-leaf similarity.
    pub fn leaf_only(height: usize, leaves: usize) -> Self {
        let mut t = vec![0.0; height];
        t[height - 1] = 1.0;
        Self(vec![t; leaves])
    }

    pub fn leaf(&self, k: usize) -> &[f64] {
        &self.0[k]
    }
}

/// Everything needed to score a document against every branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsimModel {
    pub dictionary: Dictionary,
    pub tree: TopicTree,
    pub weights: WeightModel,
    pub centroids: CentroidSet,
    pub theta: BranchWeights,
}

impl HsimModel {
    pub fn new(
        dictionary: Dictionary,
        tree: TopicTree,
        weights: WeightModel,
        centroids: CentroidSet,
        theta: BranchWeights,
    ) -> Result<Self> {
        let (w, h, k) = (dictionary.len(), tree.height(), tree.leaf_count());
        let dims_ok = weights.lambda.len() == w
            && weights.alpha.len() == h
            && weights.iota.words() == w
            && weights.iota.levels() == h
            && centroids.dim() == w
            && centroids.levels() == h
            && (0..h).all(|l| centroids.level(l).len() == tree.level_size(l))
            && theta.0.len() == k
            && theta.0.iter().all(|t| t.len() == h);
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "model parts disagree on |W|={w}, h={h}, K_h={k}"
            )));
        }
        Ok(Self {
            dictionary,
            tree,
            weights,
            centroids,
            theta,
        })
    }

    /// Builds centroids and entropy features from labeled documents for a
    /// given `α`.
    ///
    /// `ι` is first taken from centroids at `Λ = I`; the resulting `Λ` is used
    /// to renormalize and re-average the documents, `ι` is re-derived from
    /// those centroids, and `Λ` and the centroids are rebuilt once more from
    /// it, so that the stored `λ_m = 1 + αᵀι_m` matches the stored `ι`.
    pub fn fit(
        dictionary: Dictionary,
        tree: TopicTree,
        docs: &[(&SparseVec, usize)],
        alpha: Vec<f64>,
        theta: BranchWeights,
    ) -> Result<Self> {
        let dim = dictionary.len();
        let ones = vec![1.0; dim];
        let base = CentroidSet::from_documents(docs.iter().copied(), &tree, dim, &ones)?;
        let iota0 = entropy_features_from_centroids(&base);
        if alpha.iter().all(|a| *a == 0.0) {
            let weights = WeightModel {
                alpha,
                iota: iota0,
                lambda: ones,
            };
            return Self::new(dictionary, tree, weights, base, theta);
        }
        let first = WeightModel::new(alpha.clone(), iota0);
        let mid = CentroidSet::from_documents(docs.iter().copied(), &tree, dim, &first.lambda)?;
        let weights = WeightModel::new(alpha, entropy_features_from_centroids(&mid));
        let centroids =
            CentroidSet::from_documents(docs.iter().copied(), &tree, dim, &weights.lambda)?;
        Self::new(dictionary, tree, weights, centroids, theta)
    }

    /// Same documents, different `θ`.
    pub fn with_theta(&self, theta: BranchWeights) -> Result<Self> {
        Self::new(
            self.dictionary.clone(),
            self.tree.clone(),
            self.weights.clone(),
            self.centroids.clone(),
            theta,
        )
    }

    pub fn height(&self) -> usize {
        self.tree.height()
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.weights.lambda
    }

    pub fn iota(&self) -> &Iota {
        &self.weights.iota
    }

    /// `xᵀΛμ` for every node, grouped by level; `x` is normalized first.
    pub fn node_similarities(&self, counts: &SparseVec) -> Vec<Vec<f64>> {
        let lambda = self.lambda();
        let x = normalize(counts, lambda).vector;
        (0..self.height())
            .map(|l| {
                self.centroids
                    .level(l)
                    .iter()
                    .map(|mu| x.weighted_dot_dense(mu, lambda))
                    .collect()
            })
            .collect()
    }

    /// `M_kᵀΛx` for every leaf `k`.
    pub fn branch_similarities(&self, counts: &SparseVec) -> Vec<Vec<f64>> {
        let nodes = self.node_similarities(counts);
        (0..self.leaf_count())
            .map(|k| {
                self.tree
                    .branch(k)
                    .iter()
                    .enumerate()
                    .map(|(l, &i)| nodes[l][i])
                    .collect()
            })
            .collect()
    }

    /// `s_h(x, c_{h,k})` for every leaf.
    pub fn scores(&self, counts: &SparseVec) -> Vec<f64> {
        self.branch_similarities(counts)
            .iter()
            .zip(&self.theta.0)
            .map(|(v, t)| v.iter().zip(t).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Leaves ordered by hierarchical similarity.
pub fn rank_leaves_hsim(counts: &SparseVec, model: &HsimModel) -> RankedList {
    RankedList::from_scores(&model.scores(counts))
}

/// Top-down ordering: the children of each node are sorted by similarity to
/// their own centroid, and all leaves under a better-ranked node precede all
/// leaves under a worse-ranked sibling. The scores carried along are the
/// plain leaf-level similarities, so they are not monotone in general.
pub fn rank_leaves_topdown(counts: &SparseVec, model: &HsimModel) -> RankedList {
    let sims = model.node_similarities(counts);
    let tree = &model.tree;
    let leaf_level = tree.height() - 1;
    let mut order = Vec::with_capacity(tree.leaf_count());
    let mut stack = vec![tree.root()];
    while let Some(node) = stack.pop() {
        if node.level == leaf_level {
            order.push(node.index);
            continue;
        }
        let mut kids: Vec<_> = node.children.iter().map(|&c| tree.node_by_id(c)).collect();
        let level_sims = &sims[node.level + 1];
        kids.sort_by(|a, b| {
            level_sims[b.index]
                .total_cmp(&level_sims[a.index])
                .then(a.index.cmp(&b.index))
        });
        // pushed in reverse so the best child is expanded first
        stack.extend(kids.into_iter().rev());
    }
    let scores = order.iter().map(|&k| sims[leaf_level][k]).collect();
    RankedList { order, scores }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TreeSpec;

    #[test]
    fn ties_break_by_index() {
        let r = RankedList::from_scores(&[0.5, 0.5, 0.5]);
        assert_eq!(r.order, [0, 1, 2]);
        let r = RankedList::from_scores(&[0.1, 0.7, 0.7, 0.2]);
        assert_eq!(r.order, [1, 2, 3, 0]);
        assert_eq!(r.rank_of(0), Some(4));
        assert!(r.is_permutation());
    }

    pub(crate) fn toy_model(theta: BranchWeights) -> HsimModel {
        // 2 level-2 nodes with 2 leaves each, 4 words
        let tree = TopicTree::from_spec(&TreeSpec::node(
            "r",
            vec![
                TreeSpec::node("A", vec![TreeSpec::leaf("a1"), TreeSpec::leaf("a2")]),
                TreeSpec::node("B", vec![TreeSpec::leaf("b1"), TreeSpec::leaf("b2")]),
            ],
        ))
        .unwrap();
        let dict = Dictionary::from_words((0..4).map(|i| format!("w{i}")).collect()).unwrap();
        let means = vec![
            vec![vec![0.25; 4]],
            vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]],
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        ];
        let centroids =
            CentroidSet::from_means(means, vec![vec![4], vec![2, 2], vec![1; 4]]).unwrap();
        HsimModel::new(dict, tree, WeightModel::uniform(4, 3), centroids, theta).unwrap()
    }

    #[test]
    fn self_match_ranks_first() {
        let m = toy_model(BranchWeights::leaf_only(3, 4));
        let x = SparseVec::from_pairs([(2, 1.0)]);
        assert_eq!(rank_leaves_hsim(&x, &m).order[0], 2);
    }

    #[test]
    fn empty_doc_gives_identity() {
        let m = toy_model(BranchWeights::uniform(3, 4));
        let r = rank_leaves_hsim(&SparseVec::new(), &m);
        assert_eq!(r.order, [0, 1, 2, 3]);
        let r = rank_leaves_topdown(&SparseVec::new(), &m);
        assert_eq!(r.order, [0, 1, 2, 3]);
    }

    #[test]
    fn topdown_keeps_blocks() {
        let m = toy_model(BranchWeights::uniform(3, 4));
        // closer to B overall, but best single leaf is a1
        let x = SparseVec::from_pairs([(0, 1.0), (2, 0.8), (3, 0.8)]);
        let td = rank_leaves_topdown(&x, &m);
        assert_eq!(td.order, [2, 3, 0, 1]);
        let flat = rank_leaves_hsim(&x, &m.with_theta(BranchWeights::leaf_only(3, 4)).unwrap());
        assert_eq!(flat.order[0], 0);
        // the best leaf sits under the worse level-2 node, so its top-down
        // rank exceeds the number of leaves under the better node
        assert!(td.rank_of(0).unwrap() > m.tree.node(1, 1).leaves().len());
    }
}
