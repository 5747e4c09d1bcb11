//! Reciprocal rank fusion of two ranked lists.

use std::collections::BTreeMap;

use super::RankedList;

#[derive(Debug, Clone, PartialEq)]
pub struct Fused<K> {
    /// Every candidate of either list, best first, ties by key.
    pub scores: Vec<(K, f64)>,
    pub best: Option<K>,
}

fn contribution(rank: Option<usize>, k_rrf: f64) -> f64 {
    // an absent candidate has rank ∞
    rank.map_or(0.0, |r| 1.0 / (k_rrf + r as f64))
}

/// `S(c) = 1/(k + rank_s(c)) + 1/(k + rank_d(c))`.
pub fn rrf_score<K: Ord>(c: &K, sparse: &RankedList<K>, dense: &RankedList<K>, k_rrf: f64) -> f64 {
    contribution(sparse.rank_of(c), k_rrf) + contribution(dense.rank_of(c), k_rrf)
}

pub fn rrf_fuse<K: Ord + Clone>(sparse: &RankedList<K>, dense: &RankedList<K>, k_rrf: f64) -> Fused<K> {
    let mut ranks: BTreeMap<K, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (k, r) in sparse.iter() {
        ranks.entry(k.clone()).or_default().0.get_or_insert(r);
    }
    for (k, r) in dense.iter() {
        ranks.entry(k.clone()).or_default().1.get_or_insert(r);
    }
    let mut scores: Vec<(K, f64)> = ranks
        .into_iter()
        .map(|(k, (rs, rd))| (k, contribution(rs, k_rrf) + contribution(rd, k_rrf)))
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let best = scores.first().map(|(k, _)| k.clone());
    Fused { scores, best }
}
