//! End-to-end accuracy on the synthetic fixture: train on 80% of the
//! generated queries, cache them, and translate the held-out entity variants.
use skelcache::cache::{build_cache, train_embedder};
use skelcache::embed::ProjectionModel;
use skelcache::service::{gen_synthetic, run_eval, Engine};
use skelcache::Config;

fn main() -> skelcache::Result<()> {
    let templates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let corpus = gen_synthetic(templates, 20, 1)?;
    let (train, test) = corpus.split();
    let lexicon = corpus.entity_lexicon()?;
    let config = Config::default();

    for trained in [false, true] {
        let model = if trained {
            train_embedder(&train, &config, &lexicon)?
        } else {
            ProjectionModel::identity(config.embed_dim, config.rng_seed)
        };
        let cache = build_cache(&train, &config, &model, &lexicon)?;
        let entries = cache.len();
        let engine = Engine::builder(config.clone(), model, lexicon.clone())
            .knowledge(corpus.knowledge.clone())
            .tables(corpus.tables.clone())
            .cache(cache)
            .history(train.clone())
            .build()?;
        let report = run_eval(&test, &engine)?;
        println!(
            "{:9} entries={entries:3} shortcut={:.2} TB={:.2} DM={:.2} MS={:.2} FT={:.2} ACC={:.2} HR@5={:.2}",
            if trained { "trained" } else { "untrained" },
            report.shortcut_rate, report.tb, report.dm, report.ms, report.ft, report.acc, report.hr_at_5
        );
        for case in report.per_case.iter().filter(|c| !c.correct) {
            println!("  miss {} {:?} {:?}", case.query, case.route, case.matches);
        }
    }
    Ok(())
}
