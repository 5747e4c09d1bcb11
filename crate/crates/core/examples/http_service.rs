//! Starts the HTTP service on a free port and drives it with a blocking
//! client.
use std::sync::Arc;

use serde_json::{json, Value};
use skelcache::cache::build_cache;
use skelcache::embed::ProjectionModel;
use skelcache::service::{gen_synthetic, serve, Engine};
use skelcache::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = gen_synthetic(4, 10, 1)?;
    let config = Config::default();
    let model = ProjectionModel::identity(config.embed_dim, config.rng_seed);
    let lexicon = corpus.entity_lexicon()?;
    let cache = build_cache(&corpus.records, &config, &model, &lexicon)?;
    let first = cache.entries[0].source_query.clone();
    let engine = Engine::builder(config, model, lexicon)
        .knowledge(corpus.knowledge.clone())
        .tables(corpus.tables.clone())
        .cache(cache)
        .history(corpus.records.clone())
        .build()?;

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    std::thread::spawn(move || rt.block_on(serve(listener, Arc::new(engine))));

    let client = reqwest::blocking::Client::new();
    for q in [first.as_str(), "how many orders did Sony ship in the last 3 days", ""] {
        let resp = client.post(format!("{base}/translate")).json(&json!({ "query": q })).send()?;
        let status = resp.status();
        let body: Value = resp.json()?;
        println!("POST /translate {q:?} -> {status} {}", body.get("route").or(body.get("error")).unwrap_or(&Value::Null));
    }
    let stats: Value = client.get(format!("{base}/cache/stats")).send()?.json()?;
    println!("GET /cache/stats -> {stats}");
    let metrics: Value = client.get(format!("{base}/metrics")).send()?.json()?;
    println!("GET /metrics -> requests={} p90_ms={}", metrics["requests"], metrics["p90_ms"]);
    Ok(())
}
