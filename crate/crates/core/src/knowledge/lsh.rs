//! Random-hyperplane LSH with banding.
//!
//! Each of `bands` tables hashes a vector to the sign pattern of `rows`
//! Gaussian hyperplanes. Vectors at angle θ agree on one hyperplane with
//! probability 1 − θ/π.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TermDefinition;
use crate::embed::{Embedding, ProjectionModel};
use crate::error::{Error, Result};
use crate::skeleton::tokenize;

#[derive(Debug, Clone)]
pub struct HyperplaneHasher {
    bands: usize,
    rows: usize,
    planes: Vec<Vec<f64>>,
}

impl HyperplaneHasher {
    pub fn new(dim: usize, bands: usize, rows: usize, seed: u64) -> Result<Self> {
        if bands == 0 || rows == 0 || rows > 64 {
            return Err(Error::InvalidInput(format!(
                "LSH needs 1..=64 rows and at least one band, got {bands}x{rows}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = (0..bands * rows)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Ok(HyperplaneHasher { bands, rows, planes })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// One bucket key per band.
    pub fn signature(&self, v: &[f64]) -> Vec<u64> {
        // featurized text is sparse, so only its non-zero coordinates are visited
        let dim = self.planes.first().map_or(0, Vec::len);
        let nz: Vec<(usize, f64)> = v.iter().copied().take(dim).enumerate().filter(|&(_, x)| x != 0.0).collect();
        let side = |p: &[f64]| nz.iter().map(|&(i, x)| p[i] * x).sum::<f64>() >= 0.0;
        self.planes
            .chunks(self.rows)
            .map(|band| {
                band.iter()
                    .enumerate()
                    .fold(0u64, |key, (i, p)| if side(p) { key | (1 << i) } else { key })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LshIndex {
    hasher: HyperplaneHasher,
    tables: Vec<HashMap<u64, Vec<usize>>>,
    vectors: Vec<Embedding>,
}

impl LshIndex {
    pub fn new(hasher: HyperplaneHasher) -> Self {
        let tables = vec![HashMap::new(); hasher.bands()];
        LshIndex {
            hasher,
            tables,
            vectors: Vec::new(),
        }
    }

    pub fn insert(&mut self, v: Embedding) -> usize {
        let id = self.vectors.len();
        for (table, key) in self.tables.iter_mut().zip(self.hasher.signature(v.as_slice())) {
            table.entry(key).or_default().push(id);
        }
        self.vectors.push(v);
        id
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, id: usize) -> &Embedding {
        &self.vectors[id]
    }

    /// Ids sharing a bucket with `v` in at least one band, ascending.
    pub fn candidates(&self, v: &Embedding) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for (table, key) in self.tables.iter().zip(self.hasher.signature(v.as_slice())) {
            if let Some(ids) = table.get(&key) {
                out.extend(ids.iter().copied());
            }
        }
        out.into_iter().collect()
    }

    /// Candidates re-ranked by exact cosine, best first, ties by id.
    pub fn query(&self, v: &Embedding, top: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self
            .candidates(v)
            .into_iter()
            .map(|id| (id, self.vectors[id].cosine(v)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(top);
        scored
    }
}

/// Term definitions indexed by the embedding of their term.
#[derive(Debug, Clone)]
pub struct TermIndex {
    lsh: LshIndex,
    terms: Vec<TermDefinition>,
}

pub const TERMS_RETURNED: usize = 3;

pub fn lsh_build(
    terms: &[TermDefinition],
    model: &ProjectionModel,
    bands: usize,
    rows: usize,
    seed: u64,
) -> Result<TermIndex> {
    let mut lsh = LshIndex::new(HyperplaneHasher::new(model.dim(), bands, rows, seed)?);
    for t in terms {
        lsh.insert(model.encode(&t.term));
    }
    Ok(TermIndex {
        lsh,
        terms: terms.to_vec(),
    })
}

impl TermIndex {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn lsh(&self) -> &LshIndex {
        &self.lsh
    }

    /// Probes with the whole query and with each of its words; candidates
    /// from all colliding buckets are scored by their best exact cosine
    /// against any probe. Scores below `min_similarity` are dropped.
    pub fn resolve(&self, query_text: &str, model: &ProjectionModel, min_similarity: f64) -> Vec<(TermDefinition, f64)> {
        if self.terms.is_empty() {
            return Vec::new();
        }
        let mut probes = vec![model.encode(query_text)];
        probes.extend(tokenize(query_text).iter().filter(|t| t.chars().count() >= 2).map(|t| model.encode(t)));
        let mut best: HashMap<usize, f64> = HashMap::new();
        for p in &probes {
            for id in self.lsh.candidates(p) {
                let s = self.lsh.vector(id).cosine(p);
                let e = best.entry(id).or_insert(f64::NEG_INFINITY);
                *e = e.max(s);
            }
        }
        let mut scored: Vec<(usize, f64)> = best.into_iter().filter(|&(_, s)| s >= min_similarity).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(TERMS_RETURNED);
        scored.into_iter().map(|(id, s)| (self.terms[id].clone(), s)).collect()
    }
}

pub fn resolve_term(
    query_text: &str,
    index: &TermIndex,
    model: &ProjectionModel,
    min_similarity: f64,
) -> Vec<TermDefinition> {
    index
        .resolve(query_text, model, min_similarity)
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}
