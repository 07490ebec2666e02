use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub min_len: usize,
    #[serde(default)]
    pub stopwords: Option<HashSet<String>>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            min_len: 2,
            stopwords: None,
        }
    }
}

/// Splits on every non-alphabetic character, lowercases, and drops short
/// tokens and stopwords.
pub fn tokenize(raw_text: &str, config: &TokenizerConfig) -> Vec<String> {
    raw_text
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= config.min_len)
        .filter(|t| {
            config
                .stopwords
                .as_ref()
                .is_none_or(|stop| !stop.contains(t))
        })
        .collect()
}
