//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output.

mod common;

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;

use common::*;
use skelcache::cache::{
    apply_candidate, build_cache, build_similarity_graph, full_rebuild, incremental_update, partition, train_embedder,
    CacheEntry, HistoricalRecord, SkeletonCache, UpdateOutcome,
};
use skelcache::embed::{build_triplets, featurize, ProjectionModel, Triplet};
use skelcache::knowledge::{rrf_fuse, rrf_score};
use skelcache::retrieval::{Route, VectorIndex};
use skelcache::service::{gen_synthetic, p90, run_eval, Engine, EvalReport, Rewriter, SyntheticCorpus};
use skelcache::skeleton::{EntityLexicon, Skeleton};
use skelcache::{dsl_equal, Config, Query};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn template_of(r: &HistoricalRecord) -> usize {
    r.id[1..r.id.find('-').unwrap()].parse().unwrap()
}

/// Cache and model built from the training split of the five-template
/// fixture; the workload draws 80 queries from those templates and 20 from
/// three templates the cache has never seen.
struct Workload {
    config: Config,
    model: ProjectionModel,
    cache: SkeletonCache,
    history: Vec<HistoricalRecord>,
    full: SyntheticCorpus,
    queries: Vec<String>,
}

fn workload() -> Workload {
    let config = Config::default();
    let base = gen_synthetic(5, 20, 1).unwrap();
    let (train, _) = base.split();
    let full = gen_synthetic(8, 20, 2).unwrap();
    let lex = full.entity_lexicon().unwrap();
    let model = train_embedder(&train, &config, &lex).unwrap();
    let cache = build_cache(&train, &config, &model, &lex).unwrap();
    let variant = |r: &HistoricalRecord| -> usize { r.id[r.id.find('-').unwrap() + 1..].parse().unwrap() };
    let hits = full.records.iter().filter(|r| template_of(r) < 5 && variant(r) < 16);
    let misses = full.records.iter().filter(|r| template_of(r) >= 5).take(20);
    let queries = hits.chain(misses).map(|r| r.query.clone()).collect();
    Workload { config, model, cache, history: train, full, queries }
}

impl Workload {
    fn engine(&self, generator: skelcache::generator::StubGenerator, rewriter: Rewriter) -> Engine {
        Engine::builder(self.config.clone(), self.model.clone(), self.full.entity_lexicon().unwrap())
            .knowledge(self.full.knowledge.clone())
            .tables(self.full.tables.clone())
            .cache(self.cache.clone())
            .history(self.history.clone())
            .generator(Arc::new(generator))
            .rewriter(rewriter)
            .build()
            .unwrap()
    }
}

fn criterion_1(w: &Workload) -> Outcome {
    let started = Instant::now();
    let engine = w.engine(Default::default(), Rewriter::Model);
    let (mut short, mut long) = (0, 0);
    for q in &w.queries {
        let r = engine.translate(q).map_err(|e| e.to_string())?;
        match r.route {
            Route::Shortcut => {
                ensure!(r.generator_calls <= 1, "shortcut made {} calls for {q:?}", r.generator_calls);
                short += 1;
            }
            Route::Longchain => {
                ensure!(r.generator_calls >= 3, "long chain made {} calls for {q:?}", r.generator_calls);
                long += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(w.queries.len() == 100, "workload has {} queries", w.queries.len());
    ensure!(short >= 80, "only {short} cache hits");
    ensure!(secs < 10.0, "took {secs:.2}s");
    Ok(format!("{short} shortcut (<=1 call), {long} long chain (>=3 calls), {secs:.2}s"))
}

fn criterion_2(w: &Workload) -> Outcome {
    let gen = skelcache::generator::StubGenerator::default().with_delay(Duration::from_millis(50));
    let engine = w.engine(gen, Rewriter::Model);
    for q in &w.queries {
        engine.translate(q).map_err(|e| e.to_string())?;
    }
    let m = engine.metrics().snapshot();
    ensure!(m.shortcut.count > 0 && m.longchain.count > 0, "need both routes: {m:?}");
    let ratio = m.shortcut.mean_ms / m.longchain.mean_ms;
    ensure!(ratio <= 0.34, "ratio {ratio:.4}");
    Ok(format!(
        "shortcut {:.2}ms / long chain {:.2}ms = {ratio:.4} (<= 0.34)",
        m.shortcut.mean_ms, m.longchain.mean_ms
    ))
}

/// Component labels by breadth-first flood fill over the threshold
/// adjacency, independent of the union-find under test.
fn flood_labels(vs: &[skelcache::embed::Embedding], threshold: f64) -> Vec<usize> {
    let n = vs.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if label[v] == usize::MAX && vs[u].cosine(&vs[v]) >= threshold {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn criterion_3() -> Outcome {
    const N: usize = 1000;
    let mut r = rng(3);
    for case in 0..N {
        let n = r.random_range(0..=200);
        let k = r.random_range(0..=12);
        let vs = clustered_vectors(&mut r, n, 8);
        let mut idx = VectorIndex::new();
        for (i, v) in vs.iter().enumerate() {
            idx.insert(i, v.clone()).unwrap();
        }
        let q = random_unit(&mut r, 8);
        let got: Vec<(usize, f64)> = idx.search_topk(&q, k).iter().map(|h| (h.id, h.similarity)).collect();
        ensure!(got == topk_oracle(&vs, &q, k), "search_topk mismatch on instance {case}");
    }
    for case in 0..N {
        let n = r.random_range(1..=200);
        let vs = clustered_vectors(&mut r, n, 6);
        let g = build_similarity_graph(&vs, 0.9);
        let want = flood_labels(&vs, 0.9);
        for i in 0..n {
            for j in 0..n {
                ensure!(
                    (g.component[i] == g.component[j]) == (want[i] == want[j]),
                    "components mismatch on instance {case}"
                );
            }
        }
    }
    for case in 0..N {
        let m = r.random_range(1..=200);
        let v: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1000.0)).collect();
        ensure!(p90(&v).unwrap() == p90_oracle(&v), "p90 mismatch on instance {case}");
    }
    for case in 0..N {
        let s = random_ranked(&mut r, 200);
        let d = random_ranked(&mut r, 200);
        let mut got = rrf_fuse(&ranked(&s), &ranked(&d), 60.0).scores;
        got.sort_by_key(|(c, _)| *c);
        let want = rrf_oracle(&s, &d, 60.0);
        ensure!(got.len() == want.len(), "rrf candidate set mismatch on instance {case}");
        for ((a, x), (b, y)) in got.iter().zip(&want) {
            ensure!(a == b && (x - y).abs() < 1e-15, "rrf score mismatch on instance {case}");
        }
    }
    for case in 0..N {
        let a = random_dsl(&mut r);
        let same = shuffled_equivalent(&mut r, &a);
        ensure!(dsl_equal(&a, &same).all(), "dsl_equal rejected an equivalent rewrite on instance {case}");
        let (b, truth) = mutated(&mut r, &a);
        let m = dsl_equal(&a, &b);
        ensure!([m.tb, m.dm, m.ms, m.ft] == truth, "dsl_equal components wrong on instance {case}");
    }
    Ok(format!("{N} instances each for search_topk, components, p90, RRF, dsl_equal; 0 mismatches"))
}

fn criterion_4() -> Outcome {
    let s = ranked(&[7, 1, 2]);
    let d = ranked(&[7, 3]);
    let got = rrf_score(&7, &s, &d, 60.0);
    let err = (got - 2.0 / 61.0).abs();
    ensure!(err <= 1e-12, "score {got}");
    Ok(format!("score {got:.15}, |error| {err:.1e}"))
}

fn mean_cosines(model: &ProjectionModel, texts: &[String], cluster: &[usize], component: &[usize]) -> (f64, f64) {
    let e: Vec<_> = texts.iter().map(|t| model.encode(t)).collect();
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0, 0.0, 0);
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            let c = e[i].cosine(&e[j]);
            if component[i] == component[j] {
                within += c;
                nw += 1;
            } else if cluster[i] != cluster[j] {
                cross += c;
                nc += 1;
            }
        }
    }
    (within / f64::from(nw), cross / f64::from(nc))
}

struct Fixture {
    config: Config,
    corpus: SyntheticCorpus,
    lex: EntityLexicon,
    train: Vec<HistoricalRecord>,
    test: Vec<HistoricalRecord>,
    trained: ProjectionModel,
    untrained: ProjectionModel,
}

fn fixture() -> Fixture {
    let config = Config::default();
    let corpus = gen_synthetic(5, 20, 1).unwrap();
    let lex = corpus.entity_lexicon().unwrap();
    let (train, test) = corpus.split();
    let trained = train_embedder(&train, &config, &lex).unwrap();
    let untrained = ProjectionModel::identity(config.embed_dim, config.rng_seed);
    Fixture { config, corpus, lex, train, test, trained, untrained }
}

impl Fixture {
    fn eval(&self, model: &ProjectionModel) -> EvalReport {
        let cache = build_cache(&self.train, &self.config, model, &self.lex).unwrap();
        let engine = Engine::builder(self.config.clone(), model.clone(), self.lex.clone())
            .knowledge(self.corpus.knowledge.clone())
            .tables(self.corpus.tables.clone())
            .cache(cache)
            .history(self.train.clone())
            .build()
            .unwrap();
        run_eval(&self.test, &engine).unwrap()
    }
}

fn criterion_5(f: &Fixture) -> Outcome {
    let cfg = &f.config;
    let queries: Vec<Query> = f.train.iter().map(|r| r.as_query().unwrap()).collect();
    let part = partition(&queries, cfg, &f.untrained, &f.lex).unwrap();
    let texts: Vec<String> = f.train.iter().map(|r| r.query.clone()).collect();

    // (a) gradients on 100 triplets sampled from the training triplets
    let triplets = build_triplets(&part.grouped_texts(&texts), cfg.triplets_per_anchor, cfg.rng_seed).unwrap();
    let mut r = rng(5);
    let sample: Vec<&Triplet> = triplets.choose_multiple(&mut r, 100).collect();
    ensure!(sample.len() == 100, "only {} triplets available", sample.len());
    let model = noisy_model(&mut r, cfg.embed_dim, 0.02);
    let mut worst: f64 = 0.0;
    for t in &sample {
        let f3 = [featurize(&t.anchor, cfg.embed_dim), featurize(&t.positive, cfg.embed_dim), featurize(&t.negative, cfg.embed_dim)];
        let feats = [&f3[0], &f3[1], &f3[2]];
        let entries = support_entries(&mut r, feats, 200);
        let check = grad_check(&model, feats, cfg.alpha, cfg.margin, &entries, 1e-5);
        worst = worst.max(check.relative_error);
    }
    ensure!(worst < 1e-4, "(a) worst relative gradient error {worst:.3e}");

    // (b) component cohesion against cross-cluster similarity
    let (wt, ct) = mean_cosines(&f.trained, &texts, &part.clusters.labels, &part.components);
    let (wu, cu) = mean_cosines(&f.untrained, &texts, &part.clusters.labels, &part.components);
    let (mt, mu) = (wt - ct, wu - cu);
    ensure!(mt > mu, "(b) trained margin {mt:.4} not above untrained {mu:.4}");

    // (c) retrieval hit rate
    let hr_t = f.eval(&f.trained).hr_at_5;
    let hr_u = f.eval(&f.untrained).hr_at_5;
    ensure!(hr_t >= hr_u, "(c) HR@5 trained {hr_t:.3} < untrained {hr_u:.3}");
    Ok(format!(
        "(a) max rel err {worst:.2e}; (b) margin {mt:.4} vs {mu:.4}; (c) HR@5 {hr_t:.3} vs {hr_u:.3}"
    ))
}

fn axis_mix(dim: usize, cos: f64, axis: usize) -> skelcache::embed::Embedding {
    let mut v = vec![0.0; dim];
    v[0] = cos;
    v[axis] = (1.0 - cos * cos).sqrt();
    skelcache::embed::Embedding::from_raw(v).unwrap()
}

fn entry(embedding: skelcache::embed::Embedding, name: &str) -> CacheEntry {
    let mut dsl = skelcache::DslSpec::new("t_sales");
    dsl.measures.push(skelcache::Measure::new("sales", skelcache::Aggregation::Sum));
    CacheEntry::new(Skeleton { text: name.into(), placeholders: vec![] }, embedding, dsl, name.into())
}

fn replicate(records: &[HistoricalRecord], times: usize, tag: &str) -> Vec<HistoricalRecord> {
    (0..times)
        .flat_map(|k| records.iter().map(move |r| HistoricalRecord { id: format!("{tag}{k}-{}", r.id), ..r.clone() }))
        .collect()
}

fn criterion_6(f: &Fixture) -> Outcome {
    let cfg = &f.config;
    let mut cache = SkeletonCache { entries: vec![entry(axis_mix(8, 1.0, 1), "base")] };
    let (mut reinforced, mut discarded, mut inserted) = (0, 0, 0);
    for (i, s) in [0.97, 0.92, 0.85].into_iter().enumerate() {
        match apply_candidate(&mut cache, entry(axis_mix(8, s, i + 1), "candidate"), cfg) {
            UpdateOutcome::Reinforced(_) => reinforced += 1,
            UpdateOutcome::Discarded => discarded += 1,
            UpdateOutcome::Inserted => inserted += 1,
        }
    }
    ensure!(
        (reinforced, discarded, inserted) == (1, 1, 1),
        "got reinforced {reinforced} discarded {discarded} inserted {inserted}"
    );
    ensure!(cache.entries[0].weight == 2 && cache.len() == 2, "cache state {:?}", cache.len());

    let history = replicate(&f.corpus.records, 10, "r");
    let batch = replicate(&gen_synthetic(5, 20, 77).unwrap().records, 1, "new");
    let built = build_cache(&history, cfg, &f.trained, &f.lex).unwrap();
    let mut all = history.clone();
    all.extend(batch.iter().cloned());
    let (mut t_inc, mut t_full) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        let mut c = built.clone();
        let t = Instant::now();
        incremental_update(&mut c, &batch, cfg, &f.trained, &f.lex).unwrap();
        t_inc = t_inc.min(t.elapsed().as_secs_f64());
        let t = Instant::now();
        full_rebuild(&all, cfg, &f.trained, &f.lex).unwrap();
        t_full = t_full.min(t.elapsed().as_secs_f64());
    }
    ensure!(t_inc < t_full / 2.0, "incremental {t_inc:.3}s vs rebuild {t_full:.3}s");
    Ok(format!(
        "{{reinforced:1, discarded:1, inserted:1}}; incremental {:.1}ms vs rebuild {:.1}ms ({:.1}x)",
        t_inc * 1e3,
        t_full * 1e3,
        t_full / t_inc
    ))
}

fn criterion_7(f: &Fixture) -> Outcome {
    let rep = f.eval(&f.trained);
    ensure!(rep.acc >= 0.9, "ACC {:.3}", rep.acc);
    ensure!(rep.tb == 1.0, "TB {:.3}", rep.tb);
    Ok(format!("{} test cases, ACC {:.3}, TB {:.3}", rep.cases, rep.acc, rep.tb))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_skelcache"))
        .current_dir(dir)
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn pipeline(dir: &Path) -> Result<[Vec<u8>; 4], String> {
    cli(dir, &["gen-synthetic", "--templates", "5", "--variants", "20", "--seed", "1", "--out", "data"])?;
    cli(dir, &["train-embedder", "--corpus", "data/train.jsonl", "--lexicon", "data/lexicon.tsv", "--out", "model.json"])?;
    cli(
        dir,
        &["build-cache", "--corpus", "data/train.jsonl", "--lexicon", "data/lexicon.tsv", "--model", "model.json", "--out", "cache.json"],
    )?;
    cli(
        dir,
        &[
            "eval", "--test", "data/test.jsonl", "--cache", "cache.json", "--model", "model.json", "--lexicon",
            "data/lexicon.tsv", "--history", "data/train.jsonl", "--aliases", "data/aliases.json", "--terms",
            "data/terms.json", "--rules", "data/rules.json", "--tables", "data/tables.json", "--clock", "simulated",
            "--out", "report.json",
        ],
    )?;
    let read = |p: &str| std::fs::read(dir.join(p)).map_err(|e| format!("{p}: {e}"));
    let manifest = SkeletonCache::manifest_path(&dir.join("cache.json"));
    Ok([read("cache.json")?, read("model.json")?, read("report.json")?, std::fs::read(manifest).map_err(|e| e.to_string())?])
}

fn criterion_8() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    for (name, (x, y)) in ["cache", "model", "eval report", "cache manifest"].iter().zip(first.iter().zip(&second)) {
        ensure!(x == y, "{name} differs between runs");
    }
    Ok(format!(
        "cache {} B, model {} B, report {} B identical across runs",
        first[0].len(),
        first[1].len(),
        first[2].len()
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let started = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {detail} [{secs:.1}s]");
            }
        }
    };
    let w = workload();
    report(1, "single-call contract", &|| criterion_1(&w));
    report(2, "relative speedup", &|| criterion_2(&w));
    report(3, "oracle equivalence", &criterion_3);
    report(4, "fusion spot value", &criterion_4);
    let f = fixture();
    report(5, "embedder training", &|| criterion_5(&f));
    report(6, "cache update thresholds", &|| criterion_6(&f));
    report(7, "end-to-end accuracy", &|| criterion_7(&f));
    report(8, "determinism", &criterion_8);
    if failed == 0 {
        println!("acceptance: 8/8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
