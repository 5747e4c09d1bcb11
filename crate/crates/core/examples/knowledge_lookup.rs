//! Value aliases resolved by BM25 and dense retrieval fused with reciprocal
//! ranks; business terms found through the hyperplane hash index.
use skelcache::embed::ProjectionModel;
use skelcache::knowledge::KnowledgeIndex;
use skelcache::service::gen_synthetic;
use skelcache::Config;

fn main() -> skelcache::Result<()> {
    let config = Config::default();
    let corpus = gen_synthetic(5, 1, 1)?;
    let model = ProjectionModel::identity(config.embed_dim, config.rng_seed);
    let index = KnowledgeIndex::build(&corpus.knowledge, model, &config)?;

    for surface in ["bidding", "biding", "splash ads", "keyword ads", "weather"] {
        match index.resolve_value(surface, &config) {
            Some((column, canonical)) => println!("{surface:12} -> {column} = {canonical:?}"),
            None => println!("{surface:12} -> no match"),
        }
    }
    for q in ["What is the DGMV for iPhone 17?", "MAU by region last month", "refund rate"] {
        let terms: Vec<String> = index.resolve_terms(q, &config).into_iter().map(|t| t.term).collect();
        println!("{q:35} terms {terms:?}");
    }
    Ok(())
}
