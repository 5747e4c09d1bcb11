//! Skeletal embeddings.
//!
//! Text is featurized into signed hashed character 3- to 5-grams, then mapped
//! through a square projection and L2-normalized. The projection is trained
//! on (anchor, positive, negative) triplets so that queries sharing a
//! skeleton land close together regardless of their entities.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::skeleton::normalize;

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values`; a zero vector becomes `None`.
    pub fn from_raw(mut values: Vec<f64>) -> Option<Self> {
        let norm = l2(&values);
        if !(norm > 1e-12) || !norm.is_finite() {
            return None;
        }
        values.iter_mut().for_each(|x| *x /= norm);
        Some(Embedding(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    /// Cosine similarity, clamped to `[-1, 1]`.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0)
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic signed n-gram hashing, L2-normalized.
pub fn featurize(text: &str, dim: usize) -> Embedding {
    let padded: Vec<char> = format!(" {} ", normalize(text)).chars().collect();
    let mut v = vec![0.0; dim];
    let mut buf = String::new();
    for n in 3..=5 {
        for window in padded.windows(n) {
            buf.clear();
            buf.extend(window);
            let h = fnv1a(buf.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
    }
    Embedding::from_raw(v).unwrap_or_else(|| {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        Embedding(e)
    })
}

/// `±‖u − v‖`: positive for a matched (same-component) pair, negative otherwise.
pub fn pair_term(u: &Embedding, v: &Embedding, matched: bool) -> f64 {
    let d = u.distance(v);
    if matched {
        d
    } else {
        -d
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    /// Negative drawn from the anchor's cluster but another component.
    pub hard: bool,
}

/// Linear map applied to featurized text before normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionModel {
    embed_dim: usize,
    seed: u64,
    trained: bool,
    loss_history: Vec<f64>,
    /// Row-major `embed_dim × embed_dim`.
    weights: Vec<f64>,
    /// Set only while the weights are known to be the identity, so the
    /// projection can be skipped without scanning them.
    #[serde(skip)]
    known_identity: bool,
}

impl PartialEq for ProjectionModel {
    fn eq(&self, other: &Self) -> bool {
        self.embed_dim == other.embed_dim
            && self.seed == other.seed
            && self.trained == other.trained
            && self.loss_history == other.loss_history
            && self.weights == other.weights
    }
}

impl ProjectionModel {
    pub fn identity(embed_dim: usize, seed: u64) -> Self {
        let mut weights = vec![0.0; embed_dim * embed_dim];
        for i in 0..embed_dim {
            weights[i * embed_dim + i] = 1.0;
        }
        ProjectionModel {
            embed_dim,
            seed,
            trained: false,
            loss_history: Vec::new(),
            weights,
            known_identity: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.embed_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.known_identity = false;
        &mut self.weights
    }

    fn project(&self, f: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.embed_dim)
            .map(|row| dot(row, f))
            .collect()
    }

    fn is_identity(&self) -> bool {
        self.weights
            .chunks_exact(self.embed_dim)
            .enumerate()
            .all(|(r, row)| row.iter().enumerate().all(|(c, &w)| w == if r == c { 1.0 } else { 0.0 }))
    }

    /// Embeds featurized input.
    pub fn encode_features(&self, features: &Embedding) -> Embedding {
        if self.known_identity {
            return features.clone();
        }
        Embedding::from_raw(self.project(features.as_slice())).unwrap_or_else(|| features.clone())
    }

    pub fn encode(&self, text: &str) -> Embedding {
        self.encode_features(&featurize(text, self.embed_dim))
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.embed_dim * self.embed_dim {
            return Err(Error::InvalidInput(format!(
                "model has {} weights, expected {}",
                self.weights.len(),
                self.embed_dim * self.embed_dim
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("model has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: ProjectionModel = serde_json::from_str(text)?;
        m.validate()?;
        m.known_identity = m.is_identity();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ProjectionModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn encode(text: &str, model: &ProjectionModel) -> Embedding {
    model.encode(text)
}

fn hinge(d_pos: f64, d_neg: f64, alpha: f64, margin: f64) -> f64 {
    (alpha * d_pos - (1.0 - alpha) * d_neg + margin).max(0.0)
}

/// `[α‖e_a − e_p‖ − (1 − α)‖e_a − e_n‖ + m]₊`
pub fn triplet_loss(t: &Triplet, model: &ProjectionModel, alpha: f64, margin: f64) -> f64 {
    let a = model.encode(&t.anchor);
    let p = model.encode(&t.positive);
    let n = model.encode(&t.negative);
    (alpha * pair_term(&a, &p, true) + (1.0 - alpha) * pair_term(&a, &n, false) + margin).max(0.0)
}

/// Loss for one featurized triplet; adds `scale · ∂loss/∂W` into `grad`.
///
/// With `z = W f` and `e = z / ‖z‖`, the chain rule through the
/// normalization is `∂e/∂z = (I − e eᵀ) / ‖z‖`.
pub fn accumulate_gradient(
    model: &ProjectionModel,
    feats: [&Embedding; 3],
    alpha: f64,
    margin: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let dim = model.embed_dim;
    let z: Vec<Vec<f64>> = feats.iter().map(|f| model.project(f.as_slice())).collect();
    let norms: Vec<f64> = z.iter().map(|v| l2(v)).collect();
    if norms.iter().any(|n| !(*n > 1e-12)) {
        return triplet_loss_features(model, feats, alpha, margin);
    }
    let e: Vec<Vec<f64>> = z.iter().zip(&norms).map(|(v, n)| v.iter().map(|x| x / n).collect()).collect();
    let diff = |i: usize, j: usize| -> Vec<f64> { e[i].iter().zip(&e[j]).map(|(a, b)| a - b).collect() };
    let ap = diff(0, 1);
    let an = diff(0, 2);
    let d_pos = l2(&ap);
    let d_neg = l2(&an);
    let loss = hinge(d_pos, d_neg, alpha, margin);
    if loss <= 0.0 {
        return 0.0;
    }

    let mut ge = vec![vec![0.0; dim]; 3];
    if d_pos > 1e-12 {
        for k in 0..dim {
            let g = alpha * ap[k] / d_pos;
            ge[0][k] += g;
            ge[1][k] -= g;
        }
    }
    if d_neg > 1e-12 {
        for k in 0..dim {
            let g = (1.0 - alpha) * an[k] / d_neg;
            ge[0][k] -= g;
            ge[2][k] += g;
        }
    }
    for i in 0..3 {
        let proj = dot(&e[i], &ge[i]);
        let gz: Vec<f64> = (0..dim).map(|k| (ge[i][k] - e[i][k] * proj) / norms[i] * scale).collect();
        let f = feats[i].as_slice();
        for (r, g) in gz.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let row = &mut grad[r * dim..(r + 1) * dim];
            for (w, x) in row.iter_mut().zip(f) {
                *w += g * x;
            }
        }
    }
    loss
}

pub fn triplet_loss_features(model: &ProjectionModel, feats: [&Embedding; 3], alpha: f64, margin: f64) -> f64 {
    let a = model.encode_features(feats[0]);
    let p = model.encode_features(feats[1]);
    let n = model.encode_features(feats[2]);
    hinge(a.distance(&p), a.distance(&n), alpha, margin)
}

struct FeatureTable {
    feats: Vec<Embedding>,
    triplets: Vec<[usize; 3]>,
}

impl FeatureTable {
    fn new(triplets: &[Triplet], dim: usize) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut feats = Vec::new();
        let mut rows = Vec::with_capacity(triplets.len());
        for t in triplets {
            let row = [&t.anchor, &t.positive, &t.negative].map(|text| {
                *index.entry(text.as_str()).or_insert_with(|| {
                    feats.push(featurize(text, dim));
                    feats.len() - 1
                })
            });
            rows.push(row);
        }
        FeatureTable { feats, triplets: rows }
    }

    fn mean_loss(&self, model: &ProjectionModel, alpha: f64, margin: f64) -> f64 {
        let enc: Vec<Embedding> = self.feats.iter().map(|f| model.encode_features(f)).collect();
        let total: f64 = self
            .triplets
            .iter()
            .map(|&[a, p, n]| hinge(enc[a].distance(&enc[p]), enc[a].distance(&enc[n]), alpha, margin))
            .sum();
        total / self.triplets.len() as f64
    }
}

/// Mean triplet loss over a data set.
pub fn mean_triplet_loss(triplets: &[Triplet], model: &ProjectionModel, alpha: f64, margin: f64) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    FeatureTable::new(triplets, model.embed_dim).mean_loss(model, alpha, margin)
}

/// Mini-batch gradient descent on the mean triplet loss.
///
/// `loss_history[0]` is the loss before training and entry `e` the loss
/// after epoch `e`. The returned weights are those of the lowest recorded
/// loss, so the final loss never exceeds the initial one.
pub fn train_model(triplets: &[Triplet], config: &Config) -> Result<ProjectionModel> {
    if triplets.is_empty() {
        return Err(Error::Empty("triplet list"));
    }
    let dim = config.embed_dim;
    let mut model = ProjectionModel::identity(dim, config.rng_seed);
    if config.epochs == 0 {
        return Ok(model);
    }
    model.known_identity = false;
    let table = FeatureTable::new(triplets, dim);
    let (alpha, margin) = (config.alpha, config.margin);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..table.triplets.len()).collect();
    let mut grad = vec![0.0; dim * dim];

    let initial = table.mean_loss(&model, alpha, margin);
    let mut history = vec![initial];
    let mut best = (initial, model.weights.clone());

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &ti in batch {
                let [a, p, n] = table.triplets[ti];
                accumulate_gradient(
                    &model,
                    [&table.feats[a], &table.feats[p], &table.feats[n]],
                    alpha,
                    margin,
                    scale,
                    &mut grad,
                );
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
        }
        let loss = table.mean_loss(&model, alpha, margin);
        if !loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        log::debug!("epoch {epoch}: mean triplet loss {loss:.6}");
        history.push(loss);
        if loss < best.0 {
            best = (loss, model.weights.clone());
        }
    }
    model.weights = best.1;
    model.loss_history = history;
    model.trained = true;
    Ok(model)
}

/// Group labels for triplet sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedText {
    pub text: String,
    pub cluster: usize,
    pub component: usize,
}

/// Samples `per_anchor` triplets for every item of a component with at
/// least two members. Negatives are hard (same cluster, other component)
/// with probability one half when such items exist, otherwise drawn from
/// another cluster.
pub fn build_triplets(groups: &[GroupedText], per_anchor: usize, seed: u64) -> Result<Vec<Triplet>> {
    let mut by_component: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_component.entry(g.component).or_default().push(i);
    }
    let has_negative = groups.iter().any(|g| groups.iter().any(|o| o.component != g.component));
    if !has_negative {
        return Err(Error::NoNegatives);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let mates = &by_component[&g.component];
        if mates.len() < 2 {
            continue;
        }
        let hard: Vec<usize> = (0..groups.len())
            .filter(|&j| groups[j].cluster == g.cluster && groups[j].component != g.component)
            .collect();
        let easy: Vec<usize> = (0..groups.len()).filter(|&j| groups[j].cluster != g.cluster).collect();
        if hard.is_empty() && easy.is_empty() {
            continue;
        }
        for _ in 0..per_anchor {
            let others: Vec<usize> = mates.iter().copied().filter(|&j| j != i).collect();
            let pos = others[rng.random_range(0..others.len())];
            let want_hard = rng.random_bool(0.5);
            let use_hard = !hard.is_empty() && (want_hard || easy.is_empty());
            let pool = if use_hard { &hard } else { &easy };
            let neg = pool[rng.random_range(0..pool.len())];
            out.push(Triplet {
                anchor: g.text.clone(),
                positive: groups[pos].text.clone(),
                negative: groups[neg].text.clone(),
                hard: use_hard,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no component has two or more members"));
    }
    Ok(out)
}
