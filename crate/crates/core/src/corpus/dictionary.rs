use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sparse::SparseVec;

/// Ordered set of unique words with its inverse index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Dictionary {
    /// Fails with `InvalidArgument` on duplicates.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate dictionary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(String::as_str)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

impl Serialize for Dictionary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.words.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dictionary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        Dictionary::from_words(words).map_err(serde::de::Error::custom)
    }
}

/// Keeps words whose document frequency lies in `[min_df, max_df_ratio·|D|]`,
/// in order of first occurrence.
pub fn build_dictionary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_df: usize,
    max_df_ratio: f64,
) -> Result<Dictionary> {
    if min_df < 1 {
        return Err(Error::invalid("min_df must be at least 1"));
    }
    if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
        return Err(Error::invalid("max_df_ratio must lie in (0, 1]"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for tok in doc {
            let tok = tok.as_ref();
            if !seen.insert(tok) {
                continue;
            }
            let count = df.entry(tok).or_insert_with(|| {
                order.push(tok);
                0
            });
            *count += 1;
        }
    }
    let max_df = max_df_ratio * docs.len() as f64;
    let words: Vec<String> = order
        .into_iter()
        .filter(|w| {
            let f = df[w];
            f >= min_df && (f as f64) <= max_df
        })
        .map(str::to_owned)
        .collect();
    if words.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    Dictionary::from_words(words)
}

/// Count vector of `tokens`; out-of-dictionary tokens are ignored.
pub fn vectorize<S: AsRef<str>>(tokens: &[S], dict: &Dictionary) -> SparseVec {
    SparseVec::from_pairs(
        tokens
            .iter()
            .filter_map(|t| dict.index_of(t.as_ref()))
            .map(|i| (i as u32, 1.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn shared_word_appears_once() {
        let d = build_dictionary(&docs(&["model graph", "model tree"]), 1, 1.0).unwrap();
        assert_eq!(d.words(), ["model", "graph", "tree"]);
        assert_eq!(d.index_of("model"), Some(0));
    }

    #[test]
    fn min_df_threshold() {
        let mut raw = vec!["rare common"];
        raw.extend(std::iter::repeat_n("common", 9));
        let d = build_dictionary(&docs(&raw), 2, 1.0).unwrap();
        assert_eq!(d.words(), ["common"]);
    }

    #[test]
    fn max_df_ratio_threshold() {
        let mut raw = vec!["everywhere some"; 2];
        raw.extend(std::iter::repeat_n("everywhere", 8));
        // df("everywhere")/|D| = 1.0 > 0.9
        let d = build_dictionary(&docs(&raw), 1, 0.9).unwrap();
        assert_eq!(d.words(), ["some"]);
    }

    #[test]
    fn empty_after_pruning() {
        let err = build_dictionary(&docs(&["a b", "c d"]), 2, 1.0).unwrap_err();
        assert!(matches!(err, Error::EmptyDictionary));
    }

    #[test]
    fn vectorize_counts() {
        let d = Dictionary::from_words(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let v = vectorize(&["a", "a", "b"], &d);
        assert_eq!(v.iter().collect::<Vec<_>>(), [(0, 2.0), (1, 1.0)]);

        let d1 = Dictionary::from_words(vec!["a".into()]).unwrap();
        assert!(vectorize(&["z"], &d1).is_empty());

        let d2 = Dictionary::from_words(vec!["a".into(), "b".into()]).unwrap();
        let v = vectorize(&["b", "a", "b", "b"], &d2);
        assert_eq!(v.iter().collect::<Vec<_>>(), [(0, 1.0), (1, 3.0)]);
    }

    #[test]
    fn duplicate_words_rejected() {
        assert!(Dictionary::from_words(vec!["a".into(), "a".into()]).is_err());
    }
}
