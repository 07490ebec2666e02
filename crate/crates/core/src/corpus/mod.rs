//! Documents, dictionary, topic tree and label matrix.

mod dictionary;
mod labels;
mod split;
mod tokenize;
mod tree;

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dictionary::{build_dictionary, vectorize, Dictionary};
pub use labels::{build_label_matrix, LabelMatrix};
pub use split::{split, Partition, SplitFractions, SplitOutcome};
pub use tokenize::{tokenize, TokenizerConfig};
pub use tree::{load_hierarchy, Node, TopicTree, TreeSpec};

use crate::error::{Error, Result};
use crate::sparse::SparseVec;

pub const CORPUS_FORMAT: &str = "hsim-corpus/1";

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub counts: SparseVec,
}

impl Document {
    /// No dictionary word survived pruning.
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub tokenizer: TokenizerConfig,
    pub min_df: usize,
    pub max_df_ratio: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            min_df: 2,
            max_df_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dictionary: Dictionary,
    pub tree: TopicTree,
    pub docs: Vec<Document>,
    pub labels: LabelMatrix,
    pub config: CorpusConfig,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn build(records: &[RawRecord], tree: TopicTree, config: CorpusConfig) -> Result<Self> {
        let tokens: Vec<Vec<String>> = records
            .iter()
            .map(|r| tokenize(&r.text, &config.tokenizer))
            .collect();
        let dictionary = build_dictionary(&tokens, config.min_df, config.max_df_ratio)?;
        let leaf_names: Vec<Option<&str>> = records.iter().map(|r| r.leaf.as_deref()).collect();
        let labels = build_label_matrix(&leaf_names, &tree)?;
        let docs = records
            .iter()
            .zip(tokens)
            .map(|(r, toks)| Document {
                id: r.id.clone(),
                text: r.text.clone(),
                counts: vectorize(&toks, &dictionary),
                tokens: toks,
            })
            .collect();
        Self::assemble(dictionary, tree, docs, labels, config)
    }

    fn assemble(
        dictionary: Dictionary,
        tree: TopicTree,
        docs: Vec<Document>,
        labels: LabelMatrix,
        config: CorpusConfig,
    ) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (n, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), n).is_some() {
                return Err(Error::invalid(format!("duplicate document id {:?}", d.id)));
            }
        }
        if !docs.is_empty() && docs.iter().all(Document::is_empty) {
            return Err(Error::InsufficientData(
                "every document is empty after pruning".into(),
            ));
        }
        let empty = docs.iter().filter(|d| d.is_empty()).count();
        if empty > 0 {
            log::warn!("{empty} document(s) have no dictionary words after pruning");
        }
        Ok(Self {
            dictionary,
            tree,
            docs,
            labels,
            config,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn doc(&self, id: &str) -> Option<&Document> {
        self.index_of(id).map(|n| &self.docs[n])
    }

    pub fn leaf_of(&self, n: usize) -> Option<usize> {
        self.labels.leaf_of(n)
    }

    /// Documents whose count vector is empty after pruning.
    pub fn empty_documents(&self) -> Vec<&str> {
        self.docs
            .iter()
            .filter(|d| d.is_empty())
            .map(|d| d.id.as_str())
            .collect()
    }

    /// `(id, leaf)` for every labeled document.
    pub fn labeled(&self) -> Vec<(String, usize)> {
        self.docs
            .iter()
            .enumerate()
            .filter_map(|(n, d)| self.leaf_of(n).map(|k| (d.id.clone(), k)))
            .collect()
    }

    pub fn unlabeled_ids(&self) -> Vec<&str> {
        self.docs
            .iter()
            .enumerate()
            .filter(|(n, _)| self.leaf_of(*n).is_none())
            .map(|(_, d)| d.id.as_str())
            .collect()
    }

    /// `(counts, leaf)` for the given ids, which must all be labeled.
    pub fn labeled_vectors<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<(&SparseVec, usize)>> {
        ids.iter()
            .map(|id| {
                let id = id.as_ref();
                let n = self
                    .index_of(id)
                    .ok_or_else(|| Error::invalid(format!("unknown document {id:?}")))?;
                let k = self
                    .leaf_of(n)
                    .ok_or_else(|| Error::invalid(format!("document {id:?} is unlabeled")))?;
                Ok((&self.docs[n].counts, k))
            })
            .collect()
    }

    /// Tokenizes and vectorizes unseen text with this corpus's settings.
    pub fn vectorize_text(&self, text: &str) -> SparseVec {
        vectorize(&tokenize(text, &self.config.tokenizer), &self.dictionary)
    }

    /// Returns a copy with the given leaf assignments applied on top.
    pub fn with_labels(&self, extra: &HashMap<String, usize>) -> Result<Self> {
        let rows = self
            .docs
            .iter()
            .enumerate()
            .map(|(n, d)| extra.get(&d.id).copied().or(self.leaf_of(n)))
            .collect();
        let labels = LabelMatrix::new(self.tree.leaf_count(), rows)?;
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = StoredCorpus {
            format: CORPUS_FORMAT.to_owned(),
            config: self.config.clone(),
            dictionary: self.dictionary.clone(),
            tree: self.tree.clone(),
            documents: self
                .docs
                .iter()
                .enumerate()
                .map(|(n, d)| StoredDocument {
                    id: d.id.clone(),
                    text: d.text.clone(),
                    counts: d.counts.iter().map(|(i, v)| (i as u32, v)).collect(),
                    leaf: self.leaf_of(n),
                })
                .collect(),
        };
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, &file)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a built corpus file, or builds one from a raw JSON-lines corpus
    /// plus the given tree and settings.
    pub fn load_or_build(
        path: &Path,
        tree: Option<TopicTree>,
        config: CorpusConfig,
    ) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            if let Ok(stored) = serde_json::from_str::<StoredCorpus>(trimmed) {
                return Self::from_stored(stored, path);
            }
        }
        let tree = tree.ok_or_else(|| Error::Format {
            path: path.to_owned(),
            message: "raw corpus files need a --tree".into(),
        })?;
        let records = parse_records(&text, path)?;
        Self::build(&records, tree, config)
    }

    fn from_stored(stored: StoredCorpus, path: &Path) -> Result<Self> {
        if stored.format != CORPUS_FORMAT {
            return Err(Error::Format {
                path: path.to_owned(),
                message: format!("unsupported corpus format {:?}", stored.format),
            });
        }
        let dim = stored.dictionary.len();
        let mut rows = Vec::with_capacity(stored.documents.len());
        let mut docs = Vec::with_capacity(stored.documents.len());
        for d in stored.documents {
            let counts = SparseVec::from_pairs(d.counts);
            if counts.max_index().is_some_and(|i| i >= dim) {
                return Err(Error::Format {
                    path: path.to_owned(),
                    message: format!("document {:?} indexes past the dictionary", d.id),
                });
            }
            rows.push(d.leaf);
            docs.push(Document {
                tokens: tokenize(&d.text, &stored.config.tokenizer),
                id: d.id,
                text: d.text,
                counts,
            });
        }
        let labels = LabelMatrix::new(stored.tree.leaf_count(), rows)?;
        Self::assemble(stored.dictionary, stored.tree, docs, labels, stored.config)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredCorpus {
    format: String,
    config: CorpusConfig,
    dictionary: Dictionary,
    tree: TopicTree,
    documents: Vec<StoredDocument>,
}

#[derive(Serialize, Deserialize)]
struct StoredDocument {
    id: String,
    text: String,
    counts: Vec<(u32, f64)>,
    leaf: Option<usize>,
}

fn parse_records(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.to_owned(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Reads a JSON-lines corpus file.
pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let mut text = String::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_records(&text, path)
}

pub fn write_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tree(path: &Path) -> Result<TopicTree> {
    load_hierarchy(&fs::read_to_string(path)?)
}
