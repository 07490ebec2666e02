use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint training subsets `V0` (centroids), `V1` (entropy model), `V2`
/// (branch weights) and a held-out test set, all by document id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub v0: Vec<String>,
    pub v1: Vec<String>,
    pub v2: Vec<String>,
    pub test: Vec<String>,
}

impl Partition {
    pub fn training(&self) -> impl Iterator<Item = &String> {
        self.v0.iter().chain(&self.v1).chain(&self.v2)
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.training()
            .chain(&self.test)
            .all(|id| seen.insert(id.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const QUARTERS: SplitFractions = SplitFractions {
        v0: 0.25,
        v1: 0.25,
        v2: 0.25,
        test: 0.25,
    };

    fn as_array(&self) -> [f64; 4] {
        [self.v0, self.v1, self.v2, self.test]
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub partition: Partition,
    pub warnings: Vec<String>,
}

/// Stratified, seeded split of labeled documents.
///
/// `labeled` holds `(id, leaf)` pairs. Within every leaf the documents are
/// shuffled and given evenly spaced quantile keys `(r + ½)/n_leaf`; sorting
/// all documents by key interleaves the leaves, and the sets are then filled
/// in `V0, V1, V2, test` order with `⌊f·N⌋` documents each. A leaf that would
/// end up absent from `V0` has its first document moved there.
pub fn split(
    labeled: &[(String, usize)],
    leaf_count: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitOutcome> {
    let fr = fractions.as_array();
    if fr.iter().any(|f| !f.is_finite() || *f <= 0.0) {
        return Err(Error::invalid("split fractions must be positive"));
    }
    if fr.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::invalid("split fractions sum above 1"));
    }

    let mut per_leaf: Vec<Vec<&str>> = vec![Vec::new(); leaf_count];
    for (id, k) in labeled {
        if *k >= leaf_count {
            return Err(Error::OutOfRange {
                what: "leaf index",
                value: *k,
                limit: leaf_count,
            });
        }
        per_leaf[*k].push(id);
    }
    if let Some(k) = per_leaf.iter().position(Vec::is_empty) {
        return Err(Error::InsufficientData(format!(
            "leaf {k} has no labeled documents, so V0 cannot hold it"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, &str)> = Vec::with_capacity(labeled.len());
    for (k, ids) in per_leaf.iter_mut().enumerate() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        for (r, id) in ids.iter().enumerate() {
            keyed.push(((r as f64 + 0.5) / n, k, id));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let total = keyed.len();
    let counts: Vec<usize> = fr
        .iter()
        .map(|f| (f * total as f64 + 1e-9).floor() as usize)
        .collect();

    let mut sets: [Vec<(usize, String)>; 4] = Default::default();
    let mut cursor = 0;
    for (set, &count) in sets.iter_mut().zip(&counts) {
        for &(_, k, id) in keyed.iter().skip(cursor).take(count) {
            set.push((k, id.to_owned()));
        }
        cursor += count;
    }

    let mut warnings = Vec::new();
    let in_v0: HashSet<usize> = sets[0].iter().map(|(k, _)| *k).collect();
    for (k, ids) in per_leaf.iter().enumerate() {
        if in_v0.contains(&k) {
            continue;
        }
        let first = ids[0];
        for set in sets.iter_mut().skip(1) {
            set.retain(|(_, id)| id != first);
        }
        sets[0].push((k, first.to_owned()));
        let msg = format!(
            "leaf {k} has {} labeled document(s); forced {first:?} into V0",
            ids.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let [v0, v1, v2, test] = sets.map(|s| s.into_iter().map(|(_, id)| id).collect());
    Ok(SplitOutcome {
        partition: Partition { v0, v1, v2, test },
        warnings,
    })
}
