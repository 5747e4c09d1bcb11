//! The online engine: encode, retrieve, route, rewrite. Cache snapshots are
//! swapped atomically so updates never block readers.

mod eval;
mod http;
mod metrics;
mod synthetic;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use eval::{hit_rates, run_eval, CaseRecord, EvalReport, Translator};
pub use http::{router, serve};
pub use metrics::{p90, MetricsSnapshot, MetricsWindow, RouteStats};
pub use synthetic::{gen_synthetic, SyntheticCorpus, TEMPLATE_COUNT};

use crate::cache::{full_rebuild, incremental_update, rebuild_due, HistoricalRecord, SkeletonCache, UpdateReport};
use crate::config::Config;
use crate::dsl::{DslSpec, Query};
use crate::embed::ProjectionModel;
use crate::error::{Error, Result};
use crate::generator::{Counting, Generator, StubGenerator};
use crate::knowledge::{KnowledgeBase, KnowledgeIndex};
use crate::retrieval::{route, vote_table, Hit, Route, VectorIndex};
use crate::rewrite::{
    assemble_prompt, longchain_translate, remote_generate_with, substitute_generate, Exemplar, KnowledgeContext,
    ResolvedValue, TableMeta,
};
use crate::skeleton::{extract_skeleton, EntityLexicon, PlaceholderKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub dsl: DslSpec,
    pub route: Route,
    /// Best cache similarity, absent when the cache is empty.
    pub top_similarity: Option<f64>,
    pub latency_ms: f64,
    pub generator_calls: usize,
    /// Tables of the retrieved cache hits, best first, deduplicated.
    pub retrieved_tables: Vec<String>,
}

/// How the shortcut path produces its DSL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rewriter {
    /// Deterministic slot substitution, no generator call.
    #[default]
    Substitution,
    /// One generator call; substitution is the fallback.
    Model,
}

/// Where reported latencies come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum LatencyClock {
    #[default]
    Wall,
    /// Fixed cost per generator call plus a base cost, for reproducible reports.
    Simulated { base_ms: f64, per_call_ms: f64 },
}

impl LatencyClock {
    fn latency(&self, started: Instant, calls: usize) -> f64 {
        match *self {
            LatencyClock::Wall => started.elapsed().as_secs_f64() * 1e3,
            LatencyClock::Simulated { base_ms, per_call_ms } => base_ms + per_call_ms * calls as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Incremental,
    Rebuild,
    /// Incremental, followed by a rebuild once enough new queries piled up.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateResult {
    pub mode: UpdateMode,
    pub rebuilt: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<UpdateReport>,
    pub entries: usize,
    pub rebuild_due: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub total_weight: u64,
    pub tables: BTreeMap<String, usize>,
    pub history: usize,
    pub accumulated_since_rebuild: usize,
    pub rebuild_due: bool,
}

struct Snapshot {
    cache: SkeletonCache,
    index: VectorIndex,
}

impl Snapshot {
    fn new(cache: SkeletonCache) -> Arc<Self> {
        let index = VectorIndex::from_cache(&cache);
        Arc::new(Snapshot { cache, index })
    }
}

struct History {
    records: Vec<HistoricalRecord>,
    initial_pool: usize,
    accumulated: usize,
}

pub struct EngineBuilder {
    config: Config,
    model: ProjectionModel,
    lexicon: EntityLexicon,
    knowledge: KnowledgeBase,
    tables: Vec<TableMeta>,
    cache: SkeletonCache,
    history: Vec<HistoricalRecord>,
    generator: Arc<dyn Generator>,
    rewriter: Rewriter,
    clock: LatencyClock,
}

impl EngineBuilder {
    pub fn knowledge(mut self, kb: KnowledgeBase) -> Self {
        self.knowledge = kb;
        self
    }

    pub fn tables(mut self, tables: Vec<TableMeta>) -> Self {
        self.tables = tables;
        self
    }

    pub fn cache(mut self, cache: SkeletonCache) -> Self {
        self.cache = cache;
        self
    }

    /// Verified history the cache was built from; rebuilds start from it.
    pub fn history(mut self, history: Vec<HistoricalRecord>) -> Self {
        self.history = history;
        self
    }

    pub fn generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn rewriter(mut self, rewriter: Rewriter) -> Self {
        self.rewriter = rewriter;
        self
    }

    pub fn clock(mut self, clock: LatencyClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn build(self) -> Result<Engine> {
        self.config.validate()?;
        self.model.validate()?;
        if self.model.dim() != self.config.embed_dim {
            return Err(Error::config(
                "embed_dim",
                format!("model has dimension {}, config says {}", self.model.dim(), self.config.embed_dim),
            ));
        }
        for e in &self.cache.entries {
            e.validate()?;
            if e.embedding.dim() != self.config.embed_dim {
                return Err(Error::InvalidInput("cache embedding dimension differs from the model".into()));
            }
        }
        self.knowledge.validate()?;
        // value and term lookup compare surface strings, so they use the raw
        // featurizer instead of the entity-agnostic projection
        let identity = ProjectionModel::identity(self.config.embed_dim, self.config.rng_seed);
        let knowledge = KnowledgeIndex::build(&self.knowledge, identity, &self.config)?;
        let initial_pool = self.history.len();
        Ok(Engine {
            snapshot: RwLock::new(Snapshot::new(self.cache)),
            writer: Mutex::new(History { records: self.history, initial_pool, accumulated: 0 }),
            metrics: MetricsWindow::new(),
            config: self.config,
            model: self.model,
            lexicon: self.lexicon,
            knowledge,
            tables: self.tables,
            generator: self.generator,
            rewriter: self.rewriter,
            clock: self.clock,
        })
    }
}

pub struct Engine {
    config: Config,
    model: ProjectionModel,
    lexicon: EntityLexicon,
    knowledge: KnowledgeIndex,
    tables: Vec<TableMeta>,
    generator: Arc<dyn Generator>,
    rewriter: Rewriter,
    clock: LatencyClock,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<History>,
    metrics: MetricsWindow,
}

impl Engine {
    pub fn builder(config: Config, model: ProjectionModel, lexicon: EntityLexicon) -> EngineBuilder {
        EngineBuilder {
            config,
            model,
            lexicon,
            knowledge: KnowledgeBase::default(),
            tables: Vec::new(),
            cache: SkeletonCache::default(),
            history: Vec::new(),
            generator: Arc::new(StubGenerator::default()),
            rewriter: Rewriter::default(),
            clock: LatencyClock::default(),
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn metrics(&self) -> &MetricsWindow {
        &self.metrics
    }

    /// Copy of the current cache.
    pub fn cache(&self) -> SkeletonCache {
        self.snapshot.read().cache.clone()
    }

    pub fn translate(&self, text: &str) -> Result<TranslateResponse> {
        let started = Instant::now();
        let query = Query::new("request", text)?;
        let gen = Counting::new(&*self.generator);
        let snap = Arc::clone(&self.snapshot.read());

        let hits = snap.index.search_topk(&self.model.encode(text), self.config.retrieve_k);
        let top_similarity = hits.first().map(|h| h.similarity);
        let mut retrieved_tables: Vec<String> = Vec::new();
        for h in &hits {
            let t = &snap.cache.entries[h.id].table_id;
            if !retrieved_tables.contains(t) {
                retrieved_tables.push(t.clone());
            }
        }

        let mut routed = route(&hits, self.config.tau_s);
        let mut dsl = None;
        if routed == Route::Shortcut {
            match self.shortcut(&query, &hits, &snap.cache, &gen) {
                Ok(d) => dsl = Some(d),
                Err(e) => {
                    warn!("shortcut failed, using the long chain: {e}");
                    routed = Route::Longchain;
                }
            }
        }
        let dsl = match dsl {
            Some(d) => d,
            None => {
                let out = longchain_translate(&query, &self.tables, &self.knowledge, &self.lexicon, &self.config, &gen)?;
                out.dsl
            }
        };

        let calls = gen.calls();
        let latency_ms = self.clock.latency(started, calls);
        self.metrics.record(routed, latency_ms, calls, gen.tokens());
        Ok(TranslateResponse { dsl, route: routed, top_similarity, latency_ms, generator_calls: calls, retrieved_tables })
    }

    fn shortcut(&self, query: &Query, hits: &[Hit], cache: &SkeletonCache, gen: &dyn Generator) -> Result<DslSpec> {
        let table = vote_table(hits.iter().map(|h| (cache.entries[h.id].table_id.as_str(), h.similarity)))?;
        // exemplars from other tables would bring foreign columns along
        let exemplars: Vec<Exemplar> = hits
            .iter()
            .map(|h| (&cache.entries[h.id], h.similarity))
            .filter(|(e, _)| e.table_id == table)
            .map(|(e, similarity)| Exemplar { skeleton: e.skeleton.clone(), dsl: e.dsl.clone(), similarity })
            .collect();
        let skeleton = extract_skeleton(query, &self.lexicon);
        let extracted_values = skeleton.values();
        let resolved_values = extracted_values
            .iter()
            .filter(|(k, _)| matches!(k, PlaceholderKind::Ent | PlaceholderKind::Val))
            .filter_map(|(_, v)| {
                self.knowledge.resolve_value(v, &self.config).map(|(column, canonical)| ResolvedValue {
                    surface: v.clone(),
                    column,
                    canonical,
                })
            })
            .collect();
        let knowledge = KnowledgeContext {
            extracted_values,
            resolved_values,
            resolved_terms: self.knowledge.resolve_terms(&query.text, &self.config),
            dsl_rules: self.knowledge.rules.clone(),
        };
        let prompt = assemble_prompt(exemplars, &table, knowledge, &query.text)?;
        match self.rewriter {
            Rewriter::Substitution => substitute_generate(&prompt),
            Rewriter::Model => {
                // no repair retry here: the shortcut must stay a single call
                let mut dsl = match remote_generate_with(&prompt, gen, 0) {
                    Ok(d) => d,
                    Err(e) => {
                        warn!("generator rewrite failed, substituting: {e}");
                        return substitute_generate(&prompt);
                    }
                };
                dsl.table = table;
                dsl.validate()?;
                Ok(dsl)
            }
        }
    }

    /// Folds a batch of verified queries into the cache and publishes the
    /// new snapshot.
    pub fn update(&self, batch: Vec<HistoricalRecord>, mode: UpdateMode) -> Result<UpdateResult> {
        let mut history = self.writer.lock();
        let mut report = None;
        let mut rebuilt = false;
        let n = batch.len();
        history.records.extend(batch.iter().cloned());
        history.accumulated += n;
        if matches!(mode, UpdateMode::Incremental | UpdateMode::Auto) {
            let mut cache = self.snapshot.read().cache.clone();
            report = Some(incremental_update(&mut cache, &batch, &self.config, &self.model, &self.lexicon)?);
            *self.snapshot.write() = Snapshot::new(cache);
        }
        let due = rebuild_due(history.accumulated, history.initial_pool, &self.config);
        if mode == UpdateMode::Rebuild || (mode == UpdateMode::Auto && due) {
            let cache = full_rebuild(&history.records, &self.config, &self.model, &self.lexicon)?;
            *self.snapshot.write() = Snapshot::new(cache);
            history.initial_pool = history.records.len();
            history.accumulated = 0;
            rebuilt = true;
        }
        Ok(UpdateResult {
            mode,
            rebuilt,
            report,
            entries: self.snapshot.read().cache.len(),
            rebuild_due: rebuild_due(history.accumulated, history.initial_pool, &self.config),
        })
    }

    pub fn stats(&self) -> CacheStats {
        let history = self.writer.lock();
        let snap = Arc::clone(&self.snapshot.read());
        let mut tables = BTreeMap::new();
        for e in &snap.cache.entries {
            *tables.entry(e.table_id.clone()).or_insert(0) += 1;
        }
        CacheStats {
            entries: snap.cache.len(),
            total_weight: snap.cache.entries.iter().map(|e| e.weight).sum(),
            tables,
            history: history.records.len(),
            accumulated_since_rebuild: history.accumulated,
            rebuild_due: rebuild_due(history.accumulated, history.initial_pool, &self.config),
        }
    }
}

impl Translator for Engine {
    fn translate(&self, query: &str) -> Result<TranslateResponse> {
        Engine::translate(self, query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::build_cache;

    fn engine(cache: bool) -> (Engine, SyntheticCorpus) {
        let corpus = gen_synthetic(5, 10, 3).unwrap();
        let config = Config { embed_dim: 64, ..Config::default() };
        let model = ProjectionModel::identity(64, 0);
        let lex = corpus.entity_lexicon().unwrap();
        let history = if cache { corpus.records.clone() } else { Vec::new() };
        let c = build_cache(&history, &config, &model, &lex).unwrap();
        let e = Engine::builder(config, model, lex)
            .knowledge(corpus.knowledge.clone())
            .tables(corpus.tables.clone())
            .cache(c)
            .history(history)
            .build()
            .unwrap();
        (e, corpus)
    }

    #[test]
    fn empty_cache_goes_long() {
        let (e, _) = engine(false);
        let r = e.translate("total sales of Apple from 21 to 23").unwrap();
        assert_eq!(r.route, Route::Longchain);
        assert_eq!(r.generator_calls, 3);
        assert_eq!(r.top_similarity, None);
        r.dsl.validate().unwrap();
    }

    #[test]
    fn cached_query_takes_shortcut() {
        let (e, corpus) = engine(true);
        let cached = &e.cache().entries[0];
        let r = e.translate(&cached.source_query).unwrap();
        assert_eq!(r.route, Route::Shortcut);
        assert_eq!(r.generator_calls, 0);
        assert!(crate::dsl::dsl_equal(&r.dsl, &cached.dsl).all());
        assert!(corpus.records.iter().any(|rec| rec.query == cached.source_query));
        assert_eq!(e.metrics().snapshot().shortcut.count, 1);
    }

    #[test]
    fn blank_query_rejected() {
        let (e, _) = engine(true);
        assert!(e.translate("   ").is_err());
    }

    #[test]
    fn rebuild_resets_counter() {
        let (e, corpus) = engine(true);
        let before = e.stats();
        let batch: Vec<HistoricalRecord> = corpus.records[..3]
            .iter()
            .map(|r| HistoricalRecord { id: format!("n-{}", r.id), ..r.clone() })
            .collect();
        let u = e.update(batch.clone(), UpdateMode::Incremental).unwrap();
        assert!(!u.rebuilt);
        assert_eq!(e.stats().accumulated_since_rebuild, 3);
        let u = e.update(batch, UpdateMode::Rebuild).unwrap();
        assert!(u.rebuilt);
        let after = e.stats();
        assert_eq!(after.accumulated_since_rebuild, 0);
        assert_eq!(after.history, before.history + 6);
    }
}
