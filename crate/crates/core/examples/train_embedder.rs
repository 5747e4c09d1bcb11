//! Trains the entity-agnostic projection and shows that entity swaps end up
//! closer while different question shapes stay apart.
use skelcache::cache::train_embedder;
use skelcache::embed::ProjectionModel;
use skelcache::service::gen_synthetic;
use skelcache::Config;

fn main() -> skelcache::Result<()> {
    let corpus = gen_synthetic(5, 20, 1)?;
    let (train, _) = corpus.split();
    let config = Config::default();
    let model = train_embedder(&train, &config, &corpus.entity_lexicon()?)?;
    let raw = ProjectionModel::identity(config.embed_dim, config.rng_seed);

    let losses = model.loss_history();
    println!("{} epochs, loss {:.4} -> {:.4}", losses.len() - 1, losses[0], losses[losses.len() - 1]);

    let pairs = [
        ("Apple's sales from 20 to 23", "Xiaomi's sales from 18 to 21", "same shape"),
        ("what is the dgmv of Oppo in 2023", "what is the dgmv of Lenovo in 2021", "same shape"),
        ("Apple's sales from 20 to 23", "what is the dgmv of Apple in 2023", "different shape"),
    ];
    for (a, b, kind) in pairs {
        let before = raw.encode(a).cosine(&raw.encode(b));
        let after = model.encode(a).cosine(&model.encode(b));
        println!("{kind:15} {before:.3} -> {after:.3}  {a:?} / {b:?}");
    }
    Ok(())
}
