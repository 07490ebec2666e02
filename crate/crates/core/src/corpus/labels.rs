use serde::{Deserialize, Serialize};

use super::tree::TopicTree;
use crate::error::{Error, Result};

/// One-hot leaf assignment per document; `None` rows are unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    leaf_count: usize,
    rows: Vec<Option<usize>>,
}

impl LabelMatrix {
    pub fn new(leaf_count: usize, rows: Vec<Option<usize>>) -> Result<Self> {
        if let Some(bad) = rows.iter().flatten().find(|k| **k >= leaf_count) {
            return Err(Error::OutOfRange {
                what: "leaf index",
                value: *bad,
                limit: leaf_count,
            });
        }
        Ok(Self { leaf_count, rows })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn leaf_of(&self, n: usize) -> Option<usize> {
        self.rows[n]
    }

    /// `z_nk`.
    pub fn z(&self, n: usize, k: usize) -> u8 {
        u8::from(self.rows[n] == Some(k))
    }

    pub fn row(&self, n: usize) -> Vec<u8> {
        (0..self.leaf_count).map(|k| self.z(n, k)).collect()
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn labeled_count(&self) -> usize {
        self.rows.iter().flatten().count()
    }
}

/// Resolves optional leaf names against the tree.
pub fn build_label_matrix<S: AsRef<str>>(
    leaf_names: &[Option<S>],
    tree: &TopicTree,
) -> Result<LabelMatrix> {
    let rows = leaf_names
        .iter()
        .map(|name| match name {
            None => Ok(None),
            Some(n) => tree
                .find_leaf(n.as_ref())
                .map(Some)
                .ok_or_else(|| Error::UnknownLeaf(n.as_ref().to_owned())),
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMatrix::new(tree.leaf_count(), rows)
}
