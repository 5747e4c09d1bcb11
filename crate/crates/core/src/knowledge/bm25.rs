//! Okapi BM25 over short documents.

use std::collections::{HashMap, HashSet};

use super::RankedList;
use crate::skeleton::tokenize;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<String>,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_len: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let toks = tokenize(d.as_ref());
            doc_len.push(toks.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Bm25Index {
            docs: docs.iter().map(|d| d.as_ref().to_string()).collect(),
            term_freqs,
            doc_len,
            doc_freq,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of every document; query terms are deduplicated.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms: HashSet<String> = tokenize(query).into_iter().collect();
        (0..self.docs.len())
            .map(|d| {
                terms
                    .iter()
                    .filter_map(|t| self.term_freqs[d].get(t).map(|&tf| (t, tf as f64)))
                    .map(|(t, tf)| {
                        let norm = K1 * (1.0 - B + B * self.doc_len[d] as f64 / self.avg_len.max(1e-12));
                        self.idf(t) * tf * (K1 + 1.0) / (tf + norm)
                    })
                    .sum()
            })
            .collect()
    }

    /// Documents with a positive score, best first; ties by document text,
    /// then position.
    pub fn rank(&self, query: &str, k: usize) -> RankedList<usize> {
        let scores = self.scores(query);
        let mut idx: Vec<usize> = (0..self.docs.len()).filter(|&d| scores[d] > 0.0).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.docs[a].cmp(&self.docs[b]))
                .then_with(|| a.cmp(&b))
        });
        idx.truncate(k);
        RankedList::new(idx)
    }
}

pub fn bm25_rank<S: AsRef<str>>(query: &str, corpus: &[S], k: usize) -> RankedList<usize> {
    Bm25Index::new(corpus).rank(query, k)
}
