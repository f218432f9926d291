//! End-to-end stages shared by the CLI, the C interface and the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_queries, Corpus, Qrels, Query};
use crate::eval::RunRanking;
use crate::io::{read_string, write_atomic};
use crate::kg::{
    extract_subgraph, load_kg, EntityLinker, KnowledgeGraph, MentionSource, QuerySubgraph, SubgraphCache,
    DEFAULT_MAX_NODES,
};
use crate::model::{ModelConfig, RankerModel, Vocab};
use crate::train::{metrics_csv, sample_training_set, train, EpochMetrics, PreparedExample, TrainOptions};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const THREADS_ENV: &str = "KGRANK_THREADS";

/// Run `f` on a pool capped by `KGRANK_THREADS` (default: all cores).
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Linked entity ids, deduplicated and sorted.
pub fn seeds(linker: &EntityLinker<'_>, text: &str, source: MentionSource) -> BTreeSet<String> {
    linker.link(text, source).into_iter().map(|m| m.node).collect()
}

/// Entity seeds for every query and document, linked once.
pub struct LinkedTexts {
    pub queries: BTreeMap<String, BTreeSet<String>>,
    pub docs: BTreeMap<String, BTreeSet<String>>,
}

impl LinkedTexts {
    pub fn new(kg: &KnowledgeGraph, corpus: &Corpus, queries: &[Query]) -> Self {
        let linker = EntityLinker::new(kg);
        let docs = corpus
            .docs()
            .par_iter()
            .map(|d| (d.id.clone(), seeds(&linker, &d.text, MentionSource::Document)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let queries = queries
            .iter()
            .map(|q| (q.id.clone(), seeds(&linker, &q.text, MentionSource::Query)))
            .collect();
        Self { queries, docs }
    }

    pub fn subgraph(&self, kg: &KnowledgeGraph, qid: &str, docid: &str, max_nodes: usize) -> Result<QuerySubgraph> {
        let none = BTreeSet::new();
        let q = self.queries.get(qid).unwrap_or(&none);
        let d = self.docs.get(docid).unwrap_or(&none);
        Ok(extract_subgraph(kg, q, d, max_nodes)?)
    }
}

/// Subgraphs for every `(query, candidate)` pair in `run`.
pub fn build_subgraph_cache(
    kg: &KnowledgeGraph,
    corpus: &Corpus,
    queries: &[Query],
    run: &RunRanking,
    max_nodes: usize,
) -> Result<SubgraphCache> {
    let linked = LinkedTexts::new(kg, corpus, queries);
    let pairs: Vec<(&str, &str)> = run
        .iter()
        .flat_map(|(q, docs)| docs.iter().map(move |(d, _)| (q, d.as_str())))
        .collect();
    let graphs: Vec<Result<QuerySubgraph>> = pairs
        .par_iter()
        .map(|(q, d)| linked.subgraph(kg, q, d, max_nodes))
        .collect();
    let mut cache = SubgraphCache::new();
    for ((q, d), g) in pairs.into_iter().zip(graphs) {
        cache.insert(q, d, g?);
    }
    Ok(cache)
}

/// Vocabulary over the documents and the given queries.
pub fn build_vocab(corpus: &Corpus, queries: &[Query]) -> Vocab {
    Vocab::build(
        corpus
            .docs()
            .iter()
            .map(|d| d.text.as_str())
            .chain(queries.iter().map(|q| q.text.as_str())),
    )
}

/// Training inputs as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub kg: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Precomputed subgraphs; pairs it lacks are extracted on the fly.
    #[serde(default)]
    pub subgraph_cache: Option<PathBuf>,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Overrides `model.alpha` when present.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_negatives")]
    pub negatives_per_positive: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default)]
    pub kl_warmup_steps: usize,
}

fn default_epochs() -> usize {
    3
}
fn default_batch() -> usize {
    8
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_negatives() -> usize {
    crate::train::DEFAULT_NEGATIVES
}
fn default_lr() -> f64 {
    3e-4
}
fn default_clip() -> Option<f64> {
    Some(1.0)
}
fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

impl TrainConfig {
    /// Parse, resolving relative paths against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_string(path)?;
        let mut cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.corpus,
            &mut cfg.queries,
            &mut cfg.qrels,
            &mut cfg.kg,
            &mut cfg.checkpoint,
        ] {
            fix(p);
        }
        for p in [&mut cfg.lexicon, &mut cfg.subgraph_cache, &mut cfg.metrics]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            clip_norm: self.clip_norm,
            seed: self.seed,
            kl_warmup_steps: self.kl_warmup_steps,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model.clone();
        if let Some(a) = self.alpha {
            m.alpha = a;
        }
        m
    }
}

/// In-memory inputs of a training run.
pub struct TrainInputs<'a> {
    pub corpus: &'a Corpus,
    pub queries: &'a [Query],
    pub qrels: &'a Qrels,
    pub kg: &'a KnowledgeGraph,
    pub cache: Option<&'a SubgraphCache>,
}

/// Sample examples, build the model and train it.
pub fn train_model(
    inputs: &TrainInputs<'_>,
    model_config: ModelConfig,
    opts: &TrainOptions,
    negatives: usize,
    max_nodes: usize,
) -> Result<(RankerModel, Vec<EpochMetrics>)> {
    let known: BTreeSet<&str> = inputs.queries.iter().map(|q| q.id.as_str()).collect();
    let mut qrels = Qrels::new();
    for q in inputs.qrels.queries().filter(|q| known.contains(q)) {
        for (d, g) in inputs.qrels.judged(q).into_iter().flatten() {
            qrels.insert(q, d.clone(), *g);
        }
    }
    let examples = sample_training_set(&qrels, inputs.corpus, negatives, opts.seed)?;
    let vocab = build_vocab(inputs.corpus, inputs.queries);
    let model = RankerModel::new(model_config, vocab, inputs.kg.relations(), opts.seed)?;
    let linked = LinkedTexts::new(inputs.kg, inputs.corpus, inputs.queries);
    let texts: BTreeMap<&str, &str> = inputs
        .queries
        .iter()
        .map(|q| (q.id.as_str(), q.text.as_str()))
        .collect();

    let prepared: Vec<Result<PreparedExample>> = examples
        .into_par_iter()
        .map(|ex| {
            let sg = match inputs.cache.and_then(|c| c.get(&ex.qid, &ex.docid)) {
                Some(sg) => sg.clone(),
                None => linked.subgraph(inputs.kg, &ex.qid, &ex.docid, max_nodes)?,
            };
            let doc = inputs
                .corpus
                .get(&ex.docid)
                .ok_or_else(|| Error::Config(format!("qrels name unknown document `{}`", ex.docid)))?;
            let input = model.prepare(texts[ex.qid.as_str()], &doc.text, &sg)?;
            Ok(PreparedExample { example: ex, input })
        })
        .collect();
    let prepared = prepared.into_iter().collect::<Result<Vec<_>>>()?;
    log::info!("training on {} examples", prepared.len());
    let mut model = model;
    let log = train(&mut model, &prepared, opts)?;
    Ok((model, log))
}

/// `cmd_train`: load everything named by the config, train, write outputs.
pub fn train_from_config(cfg: &TrainConfig) -> Result<(RankerModel, Vec<EpochMetrics>)> {
    let corpus = Corpus::load(&cfg.corpus)?;
    let queries = load_queries(&cfg.queries)?;
    let qrels = Qrels::load(&cfg.qrels)?;
    let kg = load_kg(&cfg.kg, cfg.lexicon.as_deref())?;
    let cache = cfg.subgraph_cache.as_deref().map(SubgraphCache::load).transpose()?;
    let inputs = TrainInputs {
        corpus: &corpus,
        queries: &queries,
        qrels: &qrels,
        kg: &kg,
        cache: cache.as_ref(),
    };
    let (model, log) = train_model(
        &inputs,
        cfg.model_config(),
        &cfg.options(),
        cfg.negatives_per_positive,
        cfg.max_nodes,
    )?;
    model.save(&cfg.checkpoint)?;
    if let Some(m) = &cfg.metrics {
        write_atomic(m, metrics_csv(&log).as_bytes())?;
    }
    Ok((model, log))
}

/// Re-score every candidate of `run` with `eps = 0`.
///
/// The candidate set per query is kept as is. Scores written are the
/// true-minus-false logit difference, which orders exactly like `p(true)`
/// but does not saturate.
pub fn rerank(
    model: &RankerModel,
    run: &RunRanking,
    corpus: &Corpus,
    queries: &[Query],
    cache: Option<&SubgraphCache>,
) -> Result<RunRanking> {
    let texts: BTreeMap<&str, &str> = queries.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
    let empty = QuerySubgraph::empty();
    let pairs: Vec<(&str, &str)> = run
        .iter()
        .flat_map(|(q, docs)| docs.iter().map(move |(d, _)| (q, d.as_str())))
        .collect();
    let scores: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(q, d)| {
            let qtext = texts
                .get(q)
                .ok_or_else(|| Error::Config(format!("run query `{q}` missing from the queries file")))?;
            let doc = corpus
                .get(d)
                .ok_or_else(|| Error::Config(format!("run document `{d}` missing from the corpus")))?;
            let sg = match cache {
                _ if model.config().text_only => &empty,
                Some(c) => c
                    .get(q, d)
                    .ok_or_else(|| Error::Config(format!("no cached subgraph for ({q}, {d})")))?,
                None => return Err(Error::Config("a subgraph cache is required for graph models".into())),
            };
            let input = model.prepare(qtext, &doc.text, sg)?;
            Ok(model.score(&input)?.logit_diff)
        })
        .collect();
    let mut per_query: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    for ((q, d), s) in pairs.into_iter().zip(scores) {
        per_query.entry(q).or_default().push((d.to_string(), s?));
    }
    let mut out = RunRanking::new(if model.config().text_only {
        "text_only"
    } else {
        "kgrank"
    });
    for (q, docs) in per_query {
        out.insert(q, docs)?;
    }
    for (q, docs) in run.iter() {
        if docs.is_empty() {
            out.insert(q, Vec::new())?;
        }
    }
    Ok(out)
}

/// Candidate sets per query, for checking that re-ranking preserved them.
pub fn candidate_sets(run: &RunRanking) -> BTreeMap<String, BTreeSet<String>> {
    run.iter()
        .map(|(q, docs)| (q.to_string(), docs.iter().map(|(d, _)| d.clone()).collect()))
        .collect()
}
