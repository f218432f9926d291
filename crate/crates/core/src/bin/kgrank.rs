use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgrank::corpus::{load_queries, Corpus, Qrels};
use kgrank::eval::{evaluate_run, Metric, RunRanking};
use kgrank::index::{build_index, InvertedIndex, DEFAULT_TOP_K};
use kgrank::io::{read_json, write_atomic};
use kgrank::kg::{load_kg, SubgraphCache, DEFAULT_MAX_NODES};
use kgrank::model::RankerModel;
use kgrank::pipeline::{build_subgraph_cache, rerank, train_from_config, with_thread_pool, TrainConfig, DEFAULT_SEED};
use kgrank::synth::{generate, Knobs};
use kgrank::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "kgrank",
    version,
    about = "BM25 retrieval plus knowledge-graph-fused re-ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct SeedArg {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and persist the BM25 inverted index.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// BM25 top-k retrieval into a TREC run file.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Link entities and cache the subgraph of every (query, candidate) pair.
    Subgraphs {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
        max_nodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train a ranker from a JSON config; writes the checkpoint and metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Re-score a run with a trained checkpoint. Candidates are kept as is.
    Rerank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Evaluate a run against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Comma separated, e.g. `map,ndcg@10,recall@100`.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<Metric>>,
        /// CSV report; the summary is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Generate a synthetic KG-dependent task directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// JSON knobs file; missing fields take the pinned defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        num_queries: Option<usize>,
        #[arg(long)]
        corpus_size: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Gradient, metric, subgraph and KL self-checks.
    Selftest {
        #[command(flatten)]
        seed: SeedArg,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Index { corpus, out, .. } => {
            let corpus = Corpus::load(&corpus)?;
            let index = build_index(corpus.docs())?;
            index.save(&out)?;
            eprintln!("indexed {} documents -> {}", index.num_docs(), out.display());
        }
        Command::Retrieve {
            index, queries, k, out, ..
        } => {
            if k == 0 {
                return Err(Error::Config("--k must be positive".into()));
            }
            let index = InvertedIndex::load(&index)?;
            let queries = load_queries(&queries)?;
            let mut run = RunRanking::new("bm25");
            for q in &queries {
                run.insert(q.id.clone(), index.retrieve_topk(q, k))?;
            }
            run.save(&out)?;
            eprintln!("retrieved for {} queries -> {}", queries.len(), out.display());
        }
        Command::Subgraphs {
            kg,
            lexicon,
            corpus,
            queries,
            run,
            max_nodes,
            out,
            ..
        } => {
            let kg = load_kg(&kg, lexicon.as_deref())?;
            let corpus = Corpus::load(&corpus)?;
            let queries = load_queries(&queries)?;
            let run = RunRanking::load(&run)?;
            let cache = build_subgraph_cache(&kg, &corpus, &queries, &run, max_nodes)?;
            cache.save(&out)?;
            eprintln!("cached {} subgraphs -> {}", cache.len(), out.display());
        }
        Command::Train {
            config,
            seed,
            epochs,
            alpha,
            checkpoint,
        } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if alpha.is_some() {
                cfg.alpha = alpha;
            }
            if let Some(c) = checkpoint {
                cfg.checkpoint = c;
            }
            let (_, log) = train_from_config(&cfg)?;
            for m in &log {
                eprintln!(
                    "epoch {}: loss {:.4} nll {:.4} kl {:.4} ({:.1}s)",
                    m.epoch, m.mean_loss, m.mean_nll, m.mean_kl, m.wall_time_s
                );
            }
            eprintln!("checkpoint -> {}", cfg.checkpoint.display());
        }
        Command::Rerank {
            checkpoint,
            run,
            cache,
            corpus,
            queries,
            out,
            ..
        } => {
            let model = RankerModel::load(&checkpoint)?;
            let run = RunRanking::load(&run)?;
            let cache = cache.as_deref().map(SubgraphCache::load).transpose()?;
            let corpus = Corpus::load(&corpus)?;
            let queries = load_queries(&queries)?;
            let out_run = rerank(&model, &run, &corpus, &queries, cache.as_ref())?;
            out_run.save(&out)?;
            eprintln!("re-ranked {} queries -> {}", out_run.len(), out.display());
        }
        Command::Eval {
            run,
            qrels,
            metrics,
            out,
            ..
        } => {
            let run = RunRanking::load(&run)?;
            let qrels = Qrels::load(&qrels)?;
            let metrics = metrics.unwrap_or_else(Metric::defaults);
            let report = evaluate_run(&run, &qrels, &metrics)?;
            print!("{}", report.to_pretty());
            if let Some(p) = out {
                write_atomic(&p, report.to_csv().as_bytes())?;
            }
        }
        Command::Gen {
            out,
            config,
            num_queries,
            corpus_size,
            seed,
        } => {
            let mut knobs: Knobs = match config {
                Some(p) => read_json(&p)?,
                None => Knobs::default(),
            };
            if let Some(n) = num_queries {
                knobs.num_queries = n;
            }
            if let Some(n) = corpus_size {
                knobs.corpus_size = n;
            }
            let task = generate(seed.seed, &knobs)?;
            task.write(&out)?;
            eprintln!(
                "task in {}: bm25 ndcg@10 {:.3}, oracle {:.3}",
                out.display(),
                task.manifest.bm25_ndcg10,
                task.manifest.oracle_ndcg10
            );
        }
        Command::Selftest { .. } => {
            let checks = kgrank::selftest::run_selftest();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::Invariant(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = std::panic::catch_unwind(|| with_thread_pool(|| run(cli.command)).and_then(|r| r));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal panic");
            ExitCode::from(3)
        }
    }
}
