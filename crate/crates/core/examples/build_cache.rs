//! Offline cache construction: cluster skeletons, link near-duplicates,
//! keep the best-connected members of each group.
use skelcache::cache::{build_cache, partition, train_embedder};
use skelcache::service::gen_synthetic;
use skelcache::{Config, Query};

fn main() -> skelcache::Result<()> {
    let corpus = gen_synthetic(5, 20, 1)?;
    let (train, _) = corpus.split();
    let lexicon = corpus.entity_lexicon()?;
    let config = Config::default();
    let model = train_embedder(&train, &config, &lexicon)?;

    let queries: Vec<Query> = train.iter().map(|r| r.as_query()).collect::<skelcache::Result<_>>()?;
    let part = partition(&queries, &config, &model, &lexicon)?;
    let groups = part.components.iter().max().map_or(0, |c| c + 1);
    println!(
        "{} queries, {} clusters, {} skeleton groups, {} representatives",
        queries.len(),
        part.clusters.num_clusters(),
        groups,
        part.representatives.len()
    );

    let cache = build_cache(&train, &config, &model, &lexicon)?;
    for e in &cache.entries {
        println!("{:14} {}", e.table_id, e.skeleton.text);
    }
    Ok(())
}
