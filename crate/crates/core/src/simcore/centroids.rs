use serde::{Deserialize, Serialize};

use super::similarity::normalize;
use crate::corpus::TopicTree;
use crate::error::{Error, Result};
use crate::sparse::SparseVec;

/// Dense mean vector of every node, grouped by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    dim: usize,
    means: Vec<Vec<Vec<f64>>>,
    members: Vec<Vec<usize>>,
}

impl CentroidSet {
    /// Means of `Λ`-normalized member documents. A document counts toward its
    /// leaf and every ancestor of that leaf.
    pub fn from_documents<'a, I>(
        docs: I,
        tree: &TopicTree,
        dim: usize,
        lambda: &[f64],
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a SparseVec, usize)>,
    {
        let h = tree.height();
        let mut means: Vec<Vec<Vec<f64>>> = (0..h)
            .map(|l| vec![vec![0.0; dim]; tree.level_size(l)])
            .collect();
        let mut members: Vec<Vec<usize>> = (0..h).map(|l| vec![0; tree.level_size(l)]).collect();
        for (x, leaf) in docs {
            let xn = normalize(x, lambda).vector;
            for (l, &k) in tree.branch(leaf).iter().enumerate() {
                xn.add_into(&mut means[l][k], 1.0);
                members[l][k] += 1;
            }
        }
        for l in 0..h {
            for k in 0..tree.level_size(l) {
                let n = members[l][k];
                if n == 0 {
                    return Err(Error::EmptyCluster {
                        level: l,
                        index: k,
                        name: tree.node(l, k).name.clone(),
                    });
                }
                let inv = 1.0 / n as f64;
                means[l][k].iter_mut().for_each(|v| *v *= inv);
            }
        }
        Ok(Self {
            dim,
            means,
            members,
        })
    }

    pub fn from_means(means: Vec<Vec<Vec<f64>>>, members: Vec<Vec<usize>>) -> Result<Self> {
        let dim = means.first().and_then(|l| l.first()).map_or(0, Vec::len);
        if means.iter().flatten().any(|mu| mu.len() != dim) {
            return Err(Error::Dimension("centroid lengths differ".into()));
        }
        Ok(Self {
            dim,
            means,
            members,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.means.len()
    }

    pub fn level(&self, level: usize) -> &[Vec<f64>] {
        &self.means[level]
    }

    pub fn mean(&self, level: usize, index: usize) -> &[f64] {
        &self.means[level][index]
    }

    pub fn members(&self, level: usize, index: usize) -> usize {
        self.members[level][index]
    }

    pub fn member_counts(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Columns of `M_k`: the means of leaf `k`'s branch, root first.
    pub fn branch_matrix<'a>(&'a self, tree: &TopicTree, leaf: usize) -> Vec<&'a [f64]> {
        tree.branch(leaf)
            .iter()
            .enumerate()
            .map(|(l, &k)| self.mean(l, k))
            .collect()
    }
}
