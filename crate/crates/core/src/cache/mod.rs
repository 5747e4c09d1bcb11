//! Offline construction of the skeleton cache and its two update strategies.
//!
//! Construction skeletonizes the historical queries, embeds the skeletons,
//! clusters them with k-means, builds a thresholded similarity graph inside
//! every cluster and keeps the best-connected vertices of each connected
//! component as cache entries.

mod graph;
mod kmeans;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use graph::{build_similarity_graph, select_representatives, SimilarityGraph, UnionFind};
pub use kmeans::{kmeans, ClusterAssignment};

use crate::config::Config;
use crate::dsl::{DslSpec, Query};
use crate::embed::{build_triplets, train_model, Embedding, GroupedText, ProjectionModel};
use crate::error::{Error, Result};
use crate::skeleton::{extract_skeleton, EntityLexicon, Skeleton};

/// A historical query with its verified DSL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalRecord {
    pub id: String,
    pub query: String,
    pub dsl: DslSpec,
}

impl HistoricalRecord {
    pub fn as_query(&self) -> Result<Query> {
        Query::new(self.id.clone(), self.query.clone())
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<HistoricalRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[HistoricalRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub skeleton: Skeleton,
    pub embedding: Embedding,
    pub dsl: DslSpec,
    pub table_id: String,
    pub weight: u64,
    pub source_query: String,
}

impl CacheEntry {
    pub fn new(skeleton: Skeleton, embedding: Embedding, dsl: DslSpec, source_query: String) -> Self {
        CacheEntry {
            skeleton,
            embedding,
            table_id: dsl.table.clone(),
            dsl,
            weight: 1,
            source_query,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dsl.validate()?;
        if self.table_id != self.dsl.table {
            return Err(Error::InvalidInput(format!(
                "entry table `{}` differs from DSL table `{}`",
                self.table_id, self.dsl.table
            )));
        }
        if (self.embedding.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput("entry embedding is not unit-norm".into()));
        }
        Ok(())
    }
}

/// Sidecar written next to a cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub entries: usize,
    pub config_hash: String,
    pub model_hash: String,
    pub build_timestamp_ms: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkeletonCache {
    pub entries: Vec<CacheEntry>,
}

impl SkeletonCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        path.with_file_name(name)
    }

    /// Writes one JSON entry per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_with_manifest(
        &self,
        path: impl AsRef<Path>,
        config: &Config,
        model: &ProjectionModel,
        build_timestamp_ms: i64,
    ) -> Result<CacheManifest> {
        let path = path.as_ref();
        self.save(path)?;
        let manifest = CacheManifest {
            entries: self.len(),
            config_hash: config.fingerprint(),
            model_hash: model.fingerprint(),
            build_timestamp_ms,
        };
        std::fs::write(Self::manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CacheEntry = serde_json::from_str(&line)?;
            e.validate()?;
            entries.push(e);
        }
        Ok(SkeletonCache { entries })
    }
}

/// Skeleton-level grouping of a corpus: clusters, then connected
/// components of the per-cluster similarity graphs.
#[derive(Debug, Clone)]
pub struct Partition {
    pub skeletons: Vec<Skeleton>,
    pub skeleton_embeddings: Vec<Embedding>,
    pub clusters: ClusterAssignment,
    /// Global component label per item.
    pub components: Vec<usize>,
    /// Items chosen as cache representatives, ascending.
    pub representatives: Vec<usize>,
}

impl Partition {
    pub fn grouped_texts(&self, texts: &[String]) -> Vec<GroupedText> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| GroupedText {
                text: t.clone(),
                cluster: self.clusters.labels[i],
                component: self.components[i],
            })
            .collect()
    }
}

/// Runs skeletonization, clustering, graph construction and representative
/// selection over `queries`. `ids` break degree ties.
pub fn partition(
    queries: &[Query],
    config: &Config,
    model: &ProjectionModel,
    lexicon: &EntityLexicon,
) -> Result<Partition> {
    if queries.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let skeletons: Vec<Skeleton> = queries.iter().map(|q| extract_skeleton(q, lexicon)).collect();
    let skeleton_embeddings: Vec<Embedding> = skeletons.iter().map(|s| model.encode(&s.text)).collect();
    let m = config.num_clusters_for(queries.len());
    let clusters = kmeans(&skeleton_embeddings, m, config.rng_seed)?;

    let mut components = vec![0; queries.len()];
    let mut representatives = Vec::new();
    let mut next_component = 0;
    for c in 0..clusters.num_clusters() {
        let members = clusters.members(c);
        if members.is_empty() {
            continue;
        }
        let vecs: Vec<&Embedding> = members.iter().map(|&i| &skeleton_embeddings[i]).collect();
        let g = build_similarity_graph(&vecs, config.edge_threshold());
        for (local, &item) in members.iter().enumerate() {
            components[item] = next_component + g.component[local];
        }
        next_component += g.num_components();
        let ids: Vec<String> = members.iter().map(|&i| queries[i].id.clone()).collect();
        representatives.extend(
            select_representatives(&g, &ids, config.degree_threshold, config.in_group_top_k)
                .into_iter()
                .map(|local| members[local]),
        );
    }
    representatives.sort_unstable();
    Ok(Partition {
        skeletons,
        skeleton_embeddings,
        clusters,
        components,
        representatives,
    })
}

fn records_as_queries(records: &[HistoricalRecord]) -> Result<Vec<Query>> {
    records
        .iter()
        .map(|r| {
            r.dsl.validate()?;
            r.as_query()
        })
        .collect()
}

/// Builds the cache from verified history. Entry embeddings encode the raw
/// source query, which is what online requests are compared against.
pub fn build_cache(
    history: &[HistoricalRecord],
    config: &Config,
    model: &ProjectionModel,
    lexicon: &EntityLexicon,
) -> Result<SkeletonCache> {
    if history.is_empty() {
        return Ok(SkeletonCache::default());
    }
    let queries = records_as_queries(history)?;
    let part = partition(&queries, config, model, lexicon)?;
    let entries = part
        .representatives
        .iter()
        .map(|&i| {
            CacheEntry::new(
                part.skeletons[i].clone(),
                model.encode(&history[i].query),
                history[i].dsl.clone(),
                history[i].query.clone(),
            )
        })
        .collect();
    Ok(SkeletonCache { entries })
}

/// Rebuilds from the complete history; the old cache is simply replaced.
pub fn full_rebuild(
    all_history: &[HistoricalRecord],
    config: &Config,
    model: &ProjectionModel,
    lexicon: &EntityLexicon,
) -> Result<SkeletonCache> {
    build_cache(all_history, config, model, lexicon)
}

/// Trains the projection on history: components found with the raw
/// featurizer supply positives, other components negatives.
pub fn train_embedder(
    history: &[HistoricalRecord],
    config: &Config,
    lexicon: &EntityLexicon,
) -> Result<ProjectionModel> {
    let queries = records_as_queries(history)?;
    let base = ProjectionModel::identity(config.embed_dim, config.rng_seed);
    let part = partition(&queries, config, &base, lexicon)?;
    let texts: Vec<String> = history.iter().map(|r| r.query.clone()).collect();
    let triplets = build_triplets(&part.grouped_texts(&texts), config.triplets_per_anchor, config.rng_seed)?;
    train_model(&triplets, config)
}

/// Whether `accumulated` new queries on top of `initial_pool` reach the
/// rebuild fraction (inclusive).
pub fn rebuild_due(accumulated: usize, initial_pool: usize, config: &Config) -> bool {
    if initial_pool == 0 {
        return accumulated > 0;
    }
    accumulated as f64 / initial_pool as f64 >= config.rebuild_trigger_frac
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub reinforced: usize,
    pub inserted: usize,
    pub discarded: usize,
    /// Batch items not selected by the connectivity filter.
    pub filtered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Reinforced(usize),
    Inserted,
    Discarded,
}

/// Applies the two-threshold rule to one candidate: reinforce the closest
/// entry above `reinforce_threshold`, insert below `novelty_threshold`,
/// discard in between.
pub fn apply_candidate(cache: &mut SkeletonCache, candidate: CacheEntry, config: &Config) -> UpdateOutcome {
    let best = cache
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.embedding.cosine(&candidate.embedding)))
        .fold(None::<(usize, f64)>, |best, (i, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((i, s)),
        });
    match best {
        Some((i, s)) if s > config.reinforce_threshold => {
            cache.entries[i].weight += 1;
            UpdateOutcome::Reinforced(i)
        }
        Some((_, s)) if s >= config.novelty_threshold => UpdateOutcome::Discarded,
        _ => {
            cache.entries.push(candidate);
            UpdateOutcome::Inserted
        }
    }
}

/// Folds a batch of new verified queries into the cache. The batch is
/// first reduced to its representatives with the same connectivity rules
/// as offline construction.
pub fn incremental_update(
    cache: &mut SkeletonCache,
    batch: &[HistoricalRecord],
    config: &Config,
    model: &ProjectionModel,
    lexicon: &EntityLexicon,
) -> Result<UpdateReport> {
    let mut report = UpdateReport::default();
    if batch.is_empty() {
        return Ok(report);
    }
    let queries = records_as_queries(batch)?;
    let skeletons: Vec<Skeleton> = queries.iter().map(|q| extract_skeleton(q, lexicon)).collect();
    let sk_emb: Vec<Embedding> = skeletons.iter().map(|s| model.encode(&s.text)).collect();
    let g = build_similarity_graph(&sk_emb, config.edge_threshold());
    let ids: Vec<String> = queries.iter().map(|q| q.id.clone()).collect();
    let chosen = select_representatives(&g, &ids, config.degree_threshold, config.in_group_top_k);
    report.filtered = batch.len() - chosen.len();

    for i in chosen {
        let candidate = CacheEntry::new(
            skeletons[i].clone(),
            model.encode(&batch[i].query),
            batch[i].dsl.clone(),
            batch[i].query.clone(),
        );
        match apply_candidate(cache, candidate, config) {
            UpdateOutcome::Reinforced(_) => report.reinforced += 1,
            UpdateOutcome::Inserted => report.inserted += 1,
            UpdateOutcome::Discarded => report.discarded += 1,
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Aggregation, Measure};
    use crate::skeleton::PlaceholderKind;

    fn lex() -> EntityLexicon {
        EntityLexicon::from_entries(
            ["apple", "huawei", "xiaomi", "oppo", "vivo", "honor", "lenovo", "zte", "meizu", "oneplus"]
                .into_iter()
                .map(|s| (s, PlaceholderKind::Ent)),
        )
        .unwrap()
    }

    fn rec(i: usize, q: &str, table: &str) -> HistoricalRecord {
        let mut dsl = DslSpec::new(table);
        dsl.measures.push(Measure::new("sales", Aggregation::Sum));
        HistoricalRecord { id: format!("q{i:04}"), query: q.into(), dsl }
    }

    #[test]
    fn single_query_gives_single_entry() {
        let cfg = Config { embed_dim: 64, ..Config::default() };
        let model = ProjectionModel::identity(64, 0);
        let cache = build_cache(&[rec(0, "apple sales", "t")], &cfg, &model, &lex()).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.entries[0].weight, 1);
        cache.entries[0].validate().unwrap();
    }

    #[test]
    fn empty_history_empty_cache() {
        let model = ProjectionModel::identity(32, 0);
        assert!(build_cache(&[], &Config::default(), &model, &lex()).unwrap().is_empty());
    }

    #[test]
    fn duplicates_collapse_to_top_k() {
        let cfg = Config { embed_dim: 64, ..Config::default() };
        let model = ProjectionModel::identity(64, 0);
        let hist: Vec<_> = (0..8).map(|i| rec(i, "huawei sales in 2023", "t")).collect();
        let cache = build_cache(&hist, &cfg, &model, &lex()).unwrap();
        assert_eq!(cache.len(), cfg.in_group_top_k);
    }

    #[test]
    fn rebuild_trigger_is_inclusive() {
        let cfg = Config::default();
        assert!(rebuild_due(586, 5854, &cfg));
        assert!(rebuild_due(10, 100, &cfg));
        assert!(!rebuild_due(9, 100, &cfg));
        assert!(!rebuild_due(580, 5854, &cfg));
    }

    #[test]
    fn cache_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cfg = Config { embed_dim: 32, ..Config::default() };
        let model = ProjectionModel::identity(32, 0);
        let hist = vec![rec(0, "apple sales", "t1"), rec(1, "orders of zte by month", "t2")];
        let cache = build_cache(&hist, &cfg, &model, &lex()).unwrap();
        let manifest = cache.save_with_manifest(&path, &cfg, &model, 0).unwrap();
        assert_eq!(manifest.entries, cache.len());
        assert_eq!(SkeletonCache::load(&path).unwrap(), cache);
        assert!(SkeletonCache::manifest_path(&path).exists());
    }
}
