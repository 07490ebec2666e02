//! Planted three-level corpora: every level-2 node and every leaf owns a set
//! of keywords, and a pool of noise words is shared by all documents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RawRecord, TreeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub areas: usize,
    pub leaves_per_area: usize,
    pub docs_per_leaf: usize,
    pub area_keywords: usize,
    pub leaf_keywords: usize,
    pub noise_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is drawn from the area keywords.
    pub area_share: f64,
    /// Probability that a token is drawn from the leaf keywords.
    pub leaf_share: f64,
    /// Probability that a keyword draw comes from a sibling instead.
    pub confusion: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            areas: 4,
            leaves_per_area: 4,
            docs_per_leaf: 30,
            area_keywords: 25,
            leaf_keywords: 12,
            noise_words: 110,
            min_len: 40,
            max_len: 80,
            area_share: 0.2,
            leaf_share: 0.12,
            confusion: 0.3,
            seed: 7,
        }
    }
}

/// Alphabetic word for an integer, so the default tokenizer keeps it.
fn word(prefix: &str, mut i: usize) -> String {
    let mut s = String::from(prefix);
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    s
}

fn area_name(a: usize) -> String {
    format!("area {}", (b'A' + a as u8) as char)
}

fn leaf_name(a: usize, l: usize) -> String {
    format!("stream {}{}", (b'A' + a as u8) as char, l + 1)
}

pub fn tree_spec(config: &SynthConfig) -> TreeSpec {
    TreeSpec::node(
        "root",
        (0..config.areas)
            .map(|a| {
                TreeSpec::node(
                    area_name(a),
                    (0..config.leaves_per_area)
                        .map(|l| TreeSpec::leaf(leaf_name(a, l)))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn vocabulary_size(config: &SynthConfig) -> usize {
    config.areas * (config.area_keywords + config.leaves_per_area * config.leaf_keywords)
        + config.noise_words
}

/// Labeled records, grouped by leaf, ids `d00000`, `d00001`, ….
pub fn generate(config: &SynthConfig) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for a in 0..config.areas {
        for l in 0..config.leaves_per_area {
            for _ in 0..config.docs_per_leaf {
                let len = rng.random_range(config.min_len..=config.max_len);
                let tokens: Vec<String> = (0..len).map(|_| draw(config, a, l, &mut rng)).collect();
                out.push(RawRecord {
                    id: format!("d{:05}", out.len()),
                    text: tokens.join(" "),
                    leaf: Some(leaf_name(a, l)),
                });
            }
        }
    }
    out
}

fn draw(config: &SynthConfig, area: usize, leaf: usize, rng: &mut ChaCha8Rng) -> String {
    let u: f64 = rng.random();
    let confused = rng.random::<f64>() < config.confusion;
    if u < config.area_share {
        let a = if confused && config.areas > 1 {
            (area + rng.random_range(1..config.areas)) % config.areas
        } else {
            area
        };
        word(
            "ar",
            a * config.area_keywords + rng.random_range(0..config.area_keywords),
        )
    } else if u < config.area_share + config.leaf_share {
        // confusion between leaves stays inside the area
        let l = if confused && config.leaves_per_area > 1 {
            (leaf + rng.random_range(1..config.leaves_per_area)) % config.leaves_per_area
        } else {
            leaf
        };
        let block = area * config.leaves_per_area + l;
        word(
            "lf",
            block * config.leaf_keywords + rng.random_range(0..config.leaf_keywords),
        )
    } else {
        word("nz", rng.random_range(0..config.noise_words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, TokenizerConfig, TopicTree};

    #[test]
    fn words_survive_tokenizer() {
        let w = word("lf", 700);
        assert_eq!(
            tokenize(&w, &TokenizerConfig::default()),
            std::slice::from_ref(&w)
        );
        assert_ne!(word("lf", 1), word("lf", 27));
    }

    #[test]
    fn shape_and_determinism() {
        let c = SynthConfig {
            docs_per_leaf: 2,
            ..SynthConfig::default()
        };
        let tree = TopicTree::from_spec(&tree_spec(&c)).unwrap();
        assert_eq!(tree.level_sizes(), [1, 4, 16]);
        let a = generate(&c);
        assert_eq!(a.len(), 32);
        assert_eq!(a, generate(&c));
        assert!(a
            .iter()
            .all(|r| tree.find_leaf(r.leaf.as_deref().unwrap()).is_some()));
        assert_eq!(vocabulary_size(&SynthConfig::default()), 402);
    }
}
