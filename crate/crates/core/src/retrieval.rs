//! Online nearest-neighbour search over the cache, table voting and the
//! shortcut/long-chain routing decision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::cache::SkeletonCache;
use crate::embed::{dot, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: usize,
    pub similarity: f64,
}

/// Descending similarity, then ascending id.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.id.cmp(&b.id))
}

// max-heap on "worse" so the root is the current K-th best
struct Worst(Hit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        hit_order(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        hit_order(&self.0, &other.0)
    }
}

/// Exact cosine index over unit vectors.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    ids: Vec<usize>,
    vectors: Vec<Embedding>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cache(cache: &SkeletonCache) -> Self {
        VectorIndex {
            ids: (0..cache.len()).collect(),
            vectors: cache.entries.iter().map(|e| e.embedding.clone()).collect(),
        }
    }

    pub fn insert(&mut self, id: usize, v: Embedding) -> Result<()> {
        if self.ids.contains(&id) {
            return Err(Error::InvalidInput(format!("duplicate index id {id}")));
        }
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top `k` by cosine similarity with ties broken by ascending id.
    pub fn search_topk(&self, query: &Embedding, k: usize) -> Vec<Hit> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
        for (&id, v) in self.ids.iter().zip(&self.vectors) {
            let hit = Hit {
                id,
                similarity: dot(v.as_slice(), query.as_slice()).clamp(-1.0, 1.0),
            };
            if heap.len() < k {
                heap.push(Worst(hit));
            } else if let Some(top) = heap.peek() {
                if hit_order(&hit, &top.0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(hit));
                }
            }
        }
        let mut hits: Vec<Hit> = heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(hit_order);
        hits
    }
}

pub fn search_topk(index: &VectorIndex, query: &Embedding, k: usize) -> Vec<Hit> {
    index.search_topk(query, k)
}

/// Weighted vote: the table whose hits have the largest summed similarity.
/// Ties go to the lexicographically smallest table id.
pub fn vote_table<'a, I>(votes: I) -> Result<String>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut per_table: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (table, sim) in votes {
        per_table.entry(table).or_default().push(sim);
    }
    let mut best: Option<(&str, f64)> = None;
    for (table, mut sims) in per_table {
        // summing in sorted order keeps the result independent of hit order
        sims.sort_by(f64::total_cmp);
        let total: f64 = sims.iter().sum();
        if best.is_none_or(|(_, b)| total > b) {
            best = Some((table, total));
        }
    }
    best.map(|(t, _)| t.to_string()).ok_or(Error::NoCandidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    Shortcut,
    Longchain,
}

/// Shortcut iff the best hit reaches `tau_s`.
pub fn route(hits: &[Hit], tau_s: f64) -> Route {
    match hits.first() {
        Some(h) if h.similarity >= tau_s => Route::Shortcut,
        _ => Route::Longchain,
    }
}
