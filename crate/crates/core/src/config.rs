//! Engine configuration.
//!
//! Stored as a flat `key = value` text file (`#` starts a comment). A JSON
//! object with the same keys is accepted too. Missing keys take defaults.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    /// Minimum top-1 similarity for the cached shortcut.
    pub tau_s: f64,
    pub degree_threshold: usize,
    pub in_group_top_k: usize,
    pub retrieve_k: usize,
    pub alpha: f64,
    pub margin: f64,
    pub k_rrf: f64,
    /// `None` means `max(2, ceil(n / 20))` for a corpus of `n` queries.
    pub num_clusters: Option<usize>,
    pub embed_dim: usize,
    pub lsh_bands: usize,
    pub lsh_rows: usize,
    pub rebuild_trigger_frac: f64,
    pub reinforce_threshold: f64,
    pub novelty_threshold: f64,
    /// Similarity-graph edge threshold; `None` reuses `novelty_threshold`.
    pub edge_threshold: Option<f64>,
    pub rng_seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub triplets_per_anchor: usize,
    /// Candidates pulled from each ranker before fusion.
    pub knowledge_top_k: usize,
    /// Dense matches below this cosine are not considered knowledge hits.
    pub dense_min_similarity: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tau_s: 0.95,
            degree_threshold: 4,
            in_group_top_k: 2,
            retrieve_k: 5,
            alpha: 0.5,
            margin: 1.0,
            k_rrf: 60.0,
            num_clusters: None,
            embed_dim: 256,
            lsh_bands: 32,
            lsh_rows: 8,
            rebuild_trigger_frac: 0.10,
            reinforce_threshold: 0.95,
            novelty_threshold: 0.90,
            edge_threshold: None,
            rng_seed: 42,
            learning_rate: 1.0,
            batch_size: 32,
            epochs: 50,
            triplets_per_anchor: 2,
            knowledge_top_k: 10,
            dense_min_similarity: 0.6,
        }
    }
}

const AUTO: &str = "auto";

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn parse_opt<T: FromStr>(key: &str, raw: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if raw.eq_ignore_ascii_case(AUTO) {
        Ok(None)
    } else {
        parse(key, raw).map(Some)
    }
}

fn show_opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| AUTO.to_string(), T::to_string)
}

impl Config {
    pub fn num_clusters_for(&self, n: usize) -> usize {
        let m = self.num_clusters.unwrap_or_else(|| n.div_ceil(20).max(2));
        m.clamp(1, n.max(1))
    }

    pub fn edge_threshold(&self) -> f64 {
        self.edge_threshold.unwrap_or(self.novelty_threshold)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "tau_s" => self.tau_s = parse(key, raw)?,
            "degree_threshold" => self.degree_threshold = parse(key, raw)?,
            "in_group_top_k" => self.in_group_top_k = parse(key, raw)?,
            "retrieve_k" => self.retrieve_k = parse(key, raw)?,
            "alpha" => self.alpha = parse(key, raw)?,
            "margin" => self.margin = parse(key, raw)?,
            "k_rrf" => self.k_rrf = parse(key, raw)?,
            "num_clusters" => self.num_clusters = parse_opt(key, raw)?,
            "embed_dim" => self.embed_dim = parse(key, raw)?,
            "lsh_bands" => self.lsh_bands = parse(key, raw)?,
            "lsh_rows" => self.lsh_rows = parse(key, raw)?,
            "rebuild_trigger_frac" => self.rebuild_trigger_frac = parse(key, raw)?,
            "reinforce_threshold" => self.reinforce_threshold = parse(key, raw)?,
            "novelty_threshold" => self.novelty_threshold = parse(key, raw)?,
            "edge_threshold" => self.edge_threshold = parse_opt(key, raw)?,
            "rng_seed" => self.rng_seed = parse(key, raw)?,
            "learning_rate" => self.learning_rate = parse(key, raw)?,
            "batch_size" => self.batch_size = parse(key, raw)?,
            "epochs" => self.epochs = parse(key, raw)?,
            "triplets_per_anchor" => self.triplets_per_anchor = parse(key, raw)?,
            "knowledge_top_k" => self.knowledge_top_k = parse(key, raw)?,
            "dense_min_similarity" => self.dense_min_similarity = parse(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// All keys in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tau_s", self.tau_s.to_string()),
            ("degree_threshold", self.degree_threshold.to_string()),
            ("in_group_top_k", self.in_group_top_k.to_string()),
            ("retrieve_k", self.retrieve_k.to_string()),
            ("alpha", self.alpha.to_string()),
            ("margin", self.margin.to_string()),
            ("k_rrf", self.k_rrf.to_string()),
            ("num_clusters", show_opt(&self.num_clusters)),
            ("embed_dim", self.embed_dim.to_string()),
            ("lsh_bands", self.lsh_bands.to_string()),
            ("lsh_rows", self.lsh_rows.to_string()),
            ("rebuild_trigger_frac", self.rebuild_trigger_frac.to_string()),
            ("reinforce_threshold", self.reinforce_threshold.to_string()),
            ("novelty_threshold", self.novelty_threshold.to_string()),
            ("edge_threshold", show_opt(&self.edge_threshold)),
            ("rng_seed", self.rng_seed.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("triplets_per_anchor", self.triplets_per_anchor.to_string()),
            ("knowledge_top_k", self.knowledge_top_k.to_string()),
            ("dense_min_similarity", self.dense_min_similarity.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check((0.0..=1.0).contains(&self.tau_s), "tau_s", "must lie in [0, 1]")?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", "must lie in (0, 1)")?;
        check(self.margin >= 0.0, "margin", "must be non-negative")?;
        check(self.k_rrf > 0.0, "k_rrf", "must be positive")?;
        check(
            self.novelty_threshold > 0.0 && self.novelty_threshold <= 1.0,
            "novelty_threshold",
            "must lie in (0, 1]",
        )?;
        check(
            self.reinforce_threshold <= 1.0,
            "reinforce_threshold",
            "must not exceed 1",
        )?;
        check(
            self.novelty_threshold <= self.reinforce_threshold,
            "novelty_threshold",
            "must not exceed reinforce_threshold",
        )?;
        check(
            self.rebuild_trigger_frac > 0.0,
            "rebuild_trigger_frac",
            "must be positive",
        )?;
        check(self.learning_rate > 0.0, "learning_rate", "must be positive")?;
        check(
            (-1.0..=1.0).contains(&self.dense_min_similarity),
            "dense_min_similarity",
            "must lie in [-1, 1]",
        )?;
        if let Some(t) = self.edge_threshold {
            check(t.is_finite(), "edge_threshold", "must be finite")?;
        }
        let counts = [
            ("degree_threshold", self.degree_threshold),
            ("in_group_top_k", self.in_group_top_k),
            ("retrieve_k", self.retrieve_k),
            ("embed_dim", self.embed_dim),
            ("lsh_bands", self.lsh_bands),
            ("lsh_rows", self.lsh_rows),
            ("batch_size", self.batch_size),
            ("triplets_per_anchor", self.triplets_per_anchor),
            ("knowledge_top_k", self.knowledge_top_k),
            ("num_clusters", self.num_clusters.unwrap_or(1)),
        ];
        for (key, v) in counts {
            check(v >= 1, key, "must be at least 1")?;
        }
        check(self.lsh_rows <= 64, "lsh_rows", "at most 64 rows per band")
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        if text.trim_start().starts_with('{') {
            let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
            for (key, value) in map {
                let raw = match value {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => AUTO.to_string(),
                    other => other.to_string(),
                };
                cfg.set(&key, &raw)?;
            }
        } else {
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
                })?;
                cfg.set(key.trim(), value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Config::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
