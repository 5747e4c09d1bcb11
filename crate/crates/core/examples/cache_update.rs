//! Feeding newly verified queries back: near-duplicates reinforce existing
//! entries, novel ones are inserted, and a rebuild is flagged once enough
//! have piled up.
use skelcache::cache::{build_cache, train_embedder};
use skelcache::service::{gen_synthetic, Engine, UpdateMode};
use skelcache::Config;

fn main() -> skelcache::Result<()> {
    let config = Config::default();
    let old = gen_synthetic(3, 20, 1)?;
    let grown = gen_synthetic(6, 20, 2)?;
    let lexicon = grown.entity_lexicon()?;
    let model = train_embedder(&old.records, &config, &lexicon)?;
    let cache = build_cache(&old.records, &config, &model, &lexicon)?;
    let engine = Engine::builder(config, model, lexicon)
        .knowledge(grown.knowledge.clone())
        .tables(grown.tables.clone())
        .cache(cache)
        .history(old.records.clone())
        .build()?;
    println!("start: {:?}", engine.stats());

    // same templates with new entities, then templates the cache has not seen
    for range in [(0, 3), (3, 6)] {
        let batch: Vec<_> = grown
            .records
            .iter()
            .filter(|r| (range.0..range.1).any(|t| r.id.starts_with(&format!("s{t}-"))))
            .take(5)
            .map(|r| skelcache::cache::HistoricalRecord { id: format!("new-{}", r.id), ..r.clone() })
            .collect();
        let out = engine.update(batch, UpdateMode::Auto)?;
        println!("templates {}..{}: {:?} rebuilt={} entries={}", range.0, range.1, out.report, out.rebuilt, out.entries);
    }
    println!("end: {:?}", engine.stats());
    Ok(())
}
