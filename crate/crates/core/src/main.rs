use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use skelcache::cache::{
    build_cache, full_rebuild, incremental_update, read_records, rebuild_due, train_embedder, SkeletonCache,
};
use skelcache::embed::ProjectionModel;
use skelcache::generator::{Generator, RemoteConfig, RemoteGenerator, StubGenerator};
use skelcache::knowledge::KnowledgeBase;
use skelcache::rewrite::TableMeta;
use skelcache::service::{gen_synthetic, run_eval, serve, Engine, LatencyClock, Rewriter};
use skelcache::skeleton::EntityLexicon;
use skelcache::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "skelcache", version, about = "Skeleton-cached natural language to DSL translation")]
struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    /// key=value or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic template corpus with knowledge and table files.
    GenSynthetic {
        #[arg(long, default_value_t = 5)]
        templates: usize,
        #[arg(long, default_value_t = 20)]
        variants: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the entity-agnostic projection on historical queries.
    TrainEmbedder {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the skeleton cache from verified history.
    BuildCache {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fold new verified queries into an existing cache.
    UpdateCache {
        #[arg(long, conflicts_with = "rebuild", required_unless_present = "rebuild")]
        incremental: bool,
        #[arg(long)]
        rebuild: bool,
        #[arg(long)]
        cache: PathBuf,
        /// New verified queries (JSONL).
        #[arg(long)]
        batch: PathBuf,
        /// Full history the cache was built from.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to overwriting --cache.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate one query.
    Translate {
        query: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Grade translations of a labelled test set.
    Eval {
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Wall,
    Simulated,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    terms: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Use the remote generator configured through the environment.
    #[arg(long)]
    remote: bool,
    #[arg(long, value_enum, default_value = "wall")]
    clock: ClockArg,
    /// Cost per generator call under the simulated clock.
    #[arg(long, default_value_t = 50.0)]
    call_ms: f64,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<EntityLexicon> {
    path.map_or_else(|| Ok(EntityLexicon::new()), EntityLexicon::load)
}

fn load_model(path: Option<&Path>, config: &Config) -> Result<ProjectionModel> {
    match path {
        Some(p) => ProjectionModel::load(p),
        None => Ok(ProjectionModel::identity(config.embed_dim, config.rng_seed)),
    }
}

fn build_timestamp_ms() -> i64 {
    if let Some(secs) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok()) {
        return secs * 1000;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

fn engine(args: &EngineArgs, config: Config) -> Result<Engine> {
    let model = load_model(args.model.as_deref(), &config)?;
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let cache = match &args.cache {
        Some(p) => SkeletonCache::load(p)?,
        None => SkeletonCache::default(),
    };
    let history = match &args.history {
        Some(p) => read_records(p)?,
        None => Vec::new(),
    };
    let tables: Vec<TableMeta> = match &args.tables {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let kb = KnowledgeBase::load(args.aliases.as_deref(), args.terms.as_deref(), args.rules.as_deref())?;
    let (generator, rewriter): (Arc<dyn Generator>, Rewriter) = if args.remote {
        let rc = RemoteConfig::from_env()
            .ok_or_else(|| Error::InvalidInput(format!("--remote needs {}", RemoteConfig::ENV_URL)))?;
        (Arc::new(RemoteGenerator::new(rc)), Rewriter::Model)
    } else {
        (Arc::new(StubGenerator::default()), Rewriter::Substitution)
    };
    let clock = match args.clock {
        ClockArg::Wall => LatencyClock::Wall,
        ClockArg::Simulated => LatencyClock::Simulated { base_ms: 1.0, per_call_ms: args.call_ms },
    };
    Engine::builder(config, model, lexicon)
        .knowledge(kb)
        .tables(tables)
        .cache(cache)
        .history(history)
        .generator(generator)
        .rewriter(rewriter)
        .clock(clock)
        .build()
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{}", human());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let json = cli.json;
    match cli.command {
        Command::GenSynthetic { templates, variants, seed, out } => {
            let corpus = gen_synthetic(templates, variants, seed)?;
            corpus.write_dir(&out)?;
            let summary = serde_json::json!({ "records": corpus.records.len(), "dir": out });
            emit(json, &summary, || format!("wrote {} records to {}", corpus.records.len(), out.display()))
        }
        Command::TrainEmbedder { corpus, lexicon, out } => {
            let history = read_records(&corpus)?;
            let model = train_embedder(&history, &config, &load_lexicon(lexicon.as_deref())?)?;
            model.save(&out)?;
            let losses = model.loss_history();
            let summary = serde_json::json!({
                "epochs": losses.len().saturating_sub(1),
                "initial_loss": losses.first(),
                "final_loss": losses.last(),
                "model_hash": model.fingerprint(),
            });
            emit(json, &summary, || {
                format!(
                    "trained on {} queries, loss {:.4} -> {:.4}",
                    history.len(),
                    losses.first().copied().unwrap_or(0.0),
                    losses.last().copied().unwrap_or(0.0)
                )
            })
        }
        Command::BuildCache { corpus, lexicon, model, out } => {
            let history = read_records(&corpus)?;
            let model = load_model(model.as_deref(), &config)?;
            let cache = build_cache(&history, &config, &model, &load_lexicon(lexicon.as_deref())?)?;
            let manifest = cache.save_with_manifest(&out, &config, &model, build_timestamp_ms())?;
            emit(json, &manifest, || format!("{} entries from {} queries", cache.len(), history.len()))
        }
        Command::UpdateCache { incremental, rebuild: _, cache, batch, history, lexicon, model, out } => {
            let model = load_model(model.as_deref(), &config)?;
            let lexicon = load_lexicon(lexicon.as_deref())?;
            let batch = read_records(&batch)?;
            let mut history = match history {
                Some(p) => read_records(p)?,
                None => Vec::new(),
            };
            let out = out.unwrap_or_else(|| cache.clone());
            let stamp = build_timestamp_ms();
            if incremental {
                let mut current = SkeletonCache::load(&cache)?;
                let report = incremental_update(&mut current, &batch, &config, &model, &lexicon)?;
                current.save_with_manifest(&out, &config, &model, stamp)?;
                let due = !history.is_empty() && rebuild_due(batch.len(), history.len(), &config);
                let summary = serde_json::json!({ "report": report, "entries": current.len(), "rebuild_due": due });
                emit(json, &summary, || {
                    format!(
                        "reinforced {} inserted {} discarded {} filtered {}; {} entries{}",
                        report.reinforced,
                        report.inserted,
                        report.discarded,
                        report.filtered,
                        current.len(),
                        if due { "; full rebuild recommended" } else { "" }
                    )
                })
            } else {
                history.extend(batch);
                let rebuilt = full_rebuild(&history, &config, &model, &lexicon)?;
                let manifest = rebuilt.save_with_manifest(&out, &config, &model, stamp)?;
                emit(json, &manifest, || format!("rebuilt {} entries from {} queries", rebuilt.len(), history.len()))
            }
        }
        Command::Translate { query, engine: args } => {
            let resp = engine(&args, config)?.translate(&query)?;
            emit(json, &resp, || {
                format!(
                    "{:?} calls={} latency={:.2}ms\n{}",
                    resp.route,
                    resp.generator_calls,
                    resp.latency_ms,
                    serde_json::to_string(&resp.dsl).unwrap_or_default()
                )
            })
        }
        Command::Eval { test, engine: args, out } => {
            let cases = read_records(&test)?;
            let report = run_eval(&cases, &engine(&args, config)?)?;
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            emit(json, &report, || {
                format!(
                    "cases={} TB={:.3} DM={:.3} MS={:.3} FT={:.3} ACC={:.3} P90={:.2}ms HR@5={:.3} FHR@5={:.3}",
                    report.cases, report.tb, report.dm, report.ms, report.ft, report.acc, report.p90_ms,
                    report.hr_at_5, report.fhr_at_5
                )
            })
        }
        Command::Serve { addr, engine: args } => {
            let engine = Arc::new(engine(&args, config)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                log::info!("listening on {}", listener.local_addr()?);
                serve(listener, engine).await
            })?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
