//! The expert topic tree.
//!
//! Levels are numbered from 0 (the root) to `height() - 1` (the leaves), and
//! nodes on each level are indexed from 0 in depth-first, left-to-right
//! order. Because of that order, the leaves under any internal node form a
//! contiguous index range.

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Nested `{name, children}` record as found in hierarchy files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<TreeSpec>>,
}

impl TreeSpec {
    pub fn leaf(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            children: None,
        }
    }

    pub fn node(name: impl Into<String>, children: Vec<TreeSpec>) -> Self {
        Self {
            name: name.into(),
            children: Some(children),
        }
    }

    fn kids(&self) -> &[TreeSpec] {
        self.children.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub level: usize,
    pub index: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    leaves: Range<usize>,
}

impl Node {
    /// Leaf indices under this node.
    pub fn leaves(&self) -> Range<usize> {
        self.leaves.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicTree {
    nodes: Vec<Node>,
    levels: Vec<Vec<usize>>,
    /// `ancestors[k][l]` is the index on level `l` of leaf `k`'s ancestor.
    ancestors: Vec<Vec<usize>>,
}

impl TopicTree {
    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        // depth check first, so error messages name concrete leaves
        let mut depths: Vec<(String, usize)> = Vec::new();
        collect_leaf_depths(spec, 1, &mut depths);
        let (first_leaf, first_depth) = depths[0].clone();
        if let Some((other_leaf, other_depth)) =
            depths.iter().find(|(_, d)| *d != first_depth).cloned()
        {
            return Err(Error::NonUniformDepth {
                first_leaf,
                first_depth,
                other_leaf,
                other_depth,
            });
        }
        let height = first_depth;

        let mut tree = TopicTree {
            nodes: Vec::new(),
            levels: vec![Vec::new(); height],
            ancestors: Vec::new(),
        };
        tree.insert(spec, 0, None)?;

        let leaf_count = tree.levels[height - 1].len();
        tree.ancestors = (0..leaf_count)
            .map(|k| {
                let mut chain = vec![0; height];
                let mut id = tree.levels[height - 1][k];
                for l in (0..height).rev() {
                    chain[l] = tree.nodes[id].index;
                    if let Some(p) = tree.nodes[id].parent {
                        id = p;
                    }
                }
                chain
            })
            .collect();
        Ok(tree)
    }

    fn insert(&mut self, spec: &TreeSpec, level: usize, parent: Option<usize>) -> Result<usize> {
        let id = self.nodes.len();
        let index = self.levels[level].len();
        let first_leaf = self.levels.last().map_or(0, Vec::len);
        self.levels[level].push(id);
        self.nodes.push(Node {
            name: spec.name.clone(),
            level,
            index,
            parent,
            children: Vec::new(),
            leaves: first_leaf..first_leaf,
        });

        let mut seen = HashSet::new();
        for child in spec.kids() {
            if !seen.insert(child.name.as_str()) {
                return Err(Error::DuplicateName {
                    parent: spec.name.clone(),
                    name: child.name.clone(),
                });
            }
            let cid = self.insert(child, level + 1, Some(id))?;
            self.nodes[id].children.push(cid);
        }
        let end = if spec.kids().is_empty() {
            first_leaf + 1
        } else {
            self.levels.last().map_or(0, Vec::len)
        };
        self.nodes[id].leaves = first_leaf..end;
        Ok(id)
    }

    pub fn to_spec(&self) -> TreeSpec {
        self.spec_of(self.levels[0][0])
    }

    fn spec_of(&self, id: usize) -> TreeSpec {
        let node = &self.nodes[id];
        if node.children.is_empty() {
            TreeSpec::leaf(node.name.clone())
        } else {
            TreeSpec::node(
                node.name.clone(),
                node.children.iter().map(|c| self.spec_of(*c)).collect(),
            )
        }
    }

    /// Number of levels `h`.
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    /// Number of nodes `K_l` on `level`.
    pub fn level_size(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[self.height() - 1].len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> &Node {
        &self.nodes[self.levels[0][0]]
    }

    pub fn node(&self, level: usize, index: usize) -> &Node {
        &self.nodes[self.levels[level][index]]
    }

    pub fn node_by_id(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn leaf(&self, k: usize) -> &Node {
        self.node(self.height() - 1, k)
    }

    /// Index on `level` of the ancestor of leaf `k` (the leaf itself on the
    /// last level).
    pub fn ancestor_index(&self, leaf: usize, level: usize) -> usize {
        self.ancestors[leaf][level]
    }

    /// Indices, one per level, of the branch ending at leaf `k`.
    pub fn branch(&self, leaf: usize) -> &[usize] {
        &self.ancestors[leaf]
    }

    /// Applies the parent operator `steps` times to leaf `k`.
    pub fn parent(&self, leaf: usize, steps: usize) -> Result<&Node> {
        let h = self.height();
        if leaf >= self.leaf_count() {
            return Err(Error::OutOfRange {
                what: "leaf index",
                value: leaf,
                limit: self.leaf_count(),
            });
        }
        if steps >= h {
            return Err(Error::OutOfRange {
                what: "parent steps",
                value: steps,
                limit: h - 1,
            });
        }
        let level = h - 1 - steps;
        Ok(self.node(level, self.ancestors[leaf][level]))
    }

    /// Names from the root down to leaf `k`.
    pub fn branch_names(&self, leaf: usize) -> Vec<&str> {
        (0..self.height())
            .map(|l| self.node(l, self.ancestors[leaf][l]).name.as_str())
            .collect()
    }

    pub fn leaf_path(&self, leaf: usize) -> String {
        self.branch_names(leaf).join(" / ")
    }

    /// Resolves a leaf by its name (when unique among leaves) or by its full
    /// `root / ... / leaf` path.
    pub fn find_leaf(&self, name: &str) -> Option<usize> {
        let n = self.leaf_count();
        let mut hits = (0..n).filter(|&k| self.leaf(k).name == name);
        if let Some(k) = hits.next() {
            if hits.next().is_none() {
                return Some(k);
            }
        }
        (0..n).find(|&k| self.leaf_path(k) == name)
    }
}

impl Serialize for TopicTree {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TopicTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = TreeSpec::deserialize(d)?;
        TopicTree::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

fn collect_leaf_depths(spec: &TreeSpec, depth: usize, out: &mut Vec<(String, usize)>) {
    if spec.kids().is_empty() {
        out.push((spec.name.clone(), depth));
    }
    for c in spec.kids() {
        collect_leaf_depths(c, depth + 1, out);
    }
}

/// Parses a hierarchy document (a nested `{name, children}` record).
pub fn load_hierarchy(tree_document: &str) -> Result<TopicTree> {
    let spec: TreeSpec = serde_json::from_str(tree_document)?;
    TopicTree::from_spec(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_by_two() -> TopicTree {
        TopicTree::from_spec(&TreeSpec::node(
            "root",
            vec![
                TreeSpec::node("A", vec![TreeSpec::leaf("a1"), TreeSpec::leaf("a2")]),
                TreeSpec::node("B", vec![TreeSpec::leaf("b1"), TreeSpec::leaf("b2")]),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn counts_levels() {
        let t = two_by_two();
        assert_eq!(t.height(), 3);
        assert_eq!(t.level_sizes(), [1, 2, 4]);
        assert_eq!(t.leaf(2).name, "b1");
        assert_eq!(t.node(1, 1).leaves(), 2..4);
    }

    #[test]
    fn root_only() {
        let t = load_hierarchy(r#"{"name": "all"}"#).unwrap();
        assert_eq!(t.height(), 1);
        assert_eq!(t.level_sizes(), [1]);
        assert_eq!(t.parent(0, 0).unwrap().name, "all");
    }

    #[test]
    fn non_uniform_depth() {
        let doc = r#"{"name":"r","children":[
            {"name":"a","children":[{"name":"a1","children":[{"name":"x"}]}]},
            {"name":"b","children":[{"name":"b1"}]}]}"#;
        assert!(matches!(
            load_hierarchy(doc),
            Err(Error::NonUniformDepth { .. })
        ));
    }

    #[test]
    fn duplicate_sibling_names() {
        let doc = r#"{"name":"r","children":[{"name":"a"},{"name":"a"}]}"#;
        assert!(matches!(
            load_hierarchy(doc),
            Err(Error::DuplicateName { .. })
        ));
    }

    #[test]
    fn same_name_under_different_parents_is_fine() {
        let doc = r#"{"name":"r","children":[
            {"name":"a","children":[{"name":"misc"}]},
            {"name":"b","children":[{"name":"misc"}]}]}"#;
        let t = load_hierarchy(doc).unwrap();
        assert_eq!(t.find_leaf("misc"), None);
        assert_eq!(t.find_leaf("r / b / misc"), Some(1));
    }

    #[test]
    fn parent_walks() {
        let t = two_by_two();
        assert_eq!(t.parent(2, 0).unwrap().name, "b1");
        assert_eq!(t.parent(2, 1).unwrap().name, "B");
        assert_eq!(t.parent(2, 1).unwrap().index, 1);
        assert_eq!(t.parent(2, 2).unwrap().name, "root");
        assert!(matches!(t.parent(2, 3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn spec_round_trip() {
        let t = two_by_two();
        let json = serde_json::to_string(&t).unwrap();
        let back: TopicTree = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }
}
