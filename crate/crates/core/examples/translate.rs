//! Online translation: cache hits take the single-call shortcut, misses run
//! the three-stage chain against table metadata.
use std::sync::Arc;
use std::time::Duration;

use skelcache::cache::{build_cache, train_embedder};
use skelcache::generator::StubGenerator;
use skelcache::service::{gen_synthetic, Engine, Rewriter};
use skelcache::Config;

fn main() -> skelcache::Result<()> {
    let corpus = gen_synthetic(5, 20, 1)?;
    let everything = gen_synthetic(8, 1, 1)?;
    let (train, _) = corpus.split();
    let lexicon = everything.entity_lexicon()?;
    let config = Config::default();
    let model = train_embedder(&train, &config, &lexicon)?;
    let cache = build_cache(&train, &config, &model, &lexicon)?;

    // a pretend model that takes 20 ms per call and never answers usefully
    let slow = StubGenerator::default().with_delay(Duration::from_millis(20));
    let engine = Engine::builder(config, model, lexicon)
        .knowledge(everything.knowledge.clone())
        .tables(everything.tables.clone())
        .cache(cache)
        .generator(Arc::new(slow))
        .rewriter(Rewriter::Model)
        .build()?;

    for q in [
        "Honor's sales from 19 to 22",
        "what is the dgmv of Vivo in 2022",
        "average delivery time for Apple orders in East China during 2023",
        "top 5 stores of Xiaomi by refund amount in 2024",
    ] {
        let r = engine.translate(q)?;
        println!(
            "{:?} sim={:.3} calls={} {:.1}ms  {q}",
            r.route,
            r.top_similarity.unwrap_or(0.0),
            r.generator_calls,
            r.latency_ms
        );
        println!("    {}", serde_json::to_string(&r.dsl).unwrap_or_default());
    }
    let m = engine.metrics().snapshot();
    println!(
        "p90 {:.1}ms, shortcut mean {:.1}ms, long chain mean {:.1}ms",
        m.p90_ms.unwrap_or(0.0),
        m.shortcut.mean_ms,
        m.longchain.mean_ms
    );
    Ok(())
}
