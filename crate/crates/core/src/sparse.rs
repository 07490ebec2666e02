//! Sparse nonnegative vectors over the dictionary.

use serde::{Deserialize, Serialize};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from unsorted `(index, value)` pairs, summing duplicates
    /// and dropping explicit zeros.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut pairs: Vec<(u32, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut out = SparseVec::new();
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => *out.values.last_mut().unwrap() += v,
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out.retain_nonzero();
        out
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        Self::from_pairs(
            dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v)),
        )
    }

    fn retain_nonzero(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let (idx, val): (Vec<u32>, Vec<f64>) = self
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(i, v)| (i as u32, v))
            .unzip();
        self.indices = idx;
        self.values = val;
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(i, v)| (*i as usize, *v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|i| *i as usize)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVec {
        SparseVec {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `xᵀΛx` for diagonal `Λ`.
    pub fn weighted_norm_sq(&self, lambda: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * v * lambda[i]).sum()
    }

    /// `xᵀΛy` against a dense `y`.
    pub fn weighted_dot_dense(&self, dense: &[f64], lambda: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * lambda[i] * dense[i]).sum()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// `xᵀΛy` for two sparse vectors (merge join).
    pub fn weighted_dot(&self, other: &SparseVec, lambda: &[f64]) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    let i = self.indices[a] as usize;
                    acc += self.values[a] * lambda[i] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// Adds `factor * self` into a dense accumulator.
    pub fn add_into(&self, dense: &mut [f64], factor: f64) {
        for (i, v) in self.iter() {
            dense[i] += factor * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.add_into(&mut out, 1.0);
        out
    }
}
