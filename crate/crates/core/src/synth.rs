//! Synthetic retrieval tasks that need the knowledge graph.
//!
//! Each query owns a private cluster of entities. The query names entity `A`;
//! its relevant documents name `C_i`, reached through a bridge `A - B_i - C_i`,
//! and share only a topic word with the query. Distractors share the query's
//! salient words but mention unrelated entities, and decoys share the topic
//! and mention `X`, three hops from `A`. Lexical matching favours the wrong
//! documents; 2-hop connectivity separates the right ones.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Qrels, Query};
use crate::eval::{evaluate_run, Metric, RunRanking};
use crate::index::{build_index, InvertedIndex, DEFAULT_TOP_K};
use crate::io::{to_jsonl, write_atomic, write_json};
use crate::kg::{EntityLinker, KnowledgeGraph, MentionSource};
use crate::rng::keyed_rng;
use crate::Result;

pub const PROFILE: &str = "v1";
/// Generation fails when the 2-hop oracle ranks worse than this.
pub const ORACLE_MIN_NDCG: f64 = 0.95;

const RELATIONS: [&str; 5] = ["associated_with", "causes", "interacts_with", "part_of", "treats"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
/// Nodes per query cluster: A, B1, C1, B2, C2 .. plus Y and X.
const fn cluster_size(relevant: usize) -> usize {
    1 + 2 * relevant + 2
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible knobs: {0}")]
    Infeasible(String),
    #[error("oracle nDCG@10 {0:.3} below {ORACLE_MIN_NDCG}; the graph signal is too weak")]
    OracleTooWeak(f64),
}

/// Difficulty knobs. The defaults form the pinned profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    pub num_queries: usize,
    pub corpus_size: usize,
    pub kg_nodes: usize,
    pub relevant_per_query: usize,
    pub distractors_per_query: usize,
    pub decoys_per_query: usize,
    pub num_topics: usize,
    pub filler_vocab: usize,
    pub filler_per_doc: usize,
    pub entities_per_doc: usize,
    /// Share of relevant documents reached by a 2-hop path; the rest get a direct edge.
    pub bridge_hop_rate: f64,
    /// Chance a distractor also carries the query topic.
    pub distractor_topic_rate: f64,
    /// Share of entity names with two words.
    pub multiword_rate: f64,
    pub noise_edges_per_node: usize,
    pub test_fraction: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Self {
            num_queries: 200,
            corpus_size: 4000,
            kg_nodes: 1500,
            relevant_per_query: 2,
            distractors_per_query: 8,
            decoys_per_query: 3,
            num_topics: 80,
            filler_vocab: 600,
            filler_per_doc: 8,
            entities_per_doc: 1,
            bridge_hop_rate: 1.0,
            distractor_topic_rate: 0.3,
            multiword_rate: 0.2,
            noise_edges_per_node: 2,
            test_fraction: 0.25,
        }
    }
}

impl Knobs {
    fn check(&self) -> std::result::Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        if self.num_queries < 2 {
            return bad("need at least 2 queries".into());
        }
        if self.corpus_size < 10 * self.num_queries {
            return bad(format!(
                "corpus_size {} below 10 x num_queries {}",
                self.corpus_size, self.num_queries
            ));
        }
        let per_query = self.relevant_per_query + self.distractors_per_query + self.decoys_per_query;
        if self.relevant_per_query == 0 || self.num_queries * per_query > self.corpus_size {
            return bad(format!("{per_query} documents per query do not fit the corpus"));
        }
        let clustered = self.num_queries * cluster_size(self.relevant_per_query);
        if self.kg_nodes < clustered + 2 {
            return bad(format!(
                "kg_nodes {} below the {} cluster nodes + 2",
                self.kg_nodes, clustered
            ));
        }
        if self.num_topics < 2 || self.filler_vocab == 0 || self.entities_per_doc == 0 {
            return bad("need 2+ topics, some filler words and 1+ entity per document".into());
        }
        for (name, v) in [
            ("bridge_hop_rate", self.bridge_hop_rate),
            ("distractor_topic_rate", self.distractor_topic_rate),
            ("multiword_rate", self.multiword_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub profile: String,
    pub seed: u64,
    pub knobs: Knobs,
    pub num_docs: usize,
    pub num_queries: usize,
    pub num_train_queries: usize,
    pub num_test_queries: usize,
    pub kg_nodes: usize,
    pub kg_triples: usize,
    /// Measured at generation time over all queries.
    pub bm25_ndcg10: f64,
    pub oracle_ndcg10: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub docs: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub triples: Vec<(String, String, String)>,
    pub lexicon: Vec<(String, String)>,
    pub train_queries: Vec<String>,
    pub test_queries: Vec<String>,
    pub manifest: Manifest,
}

struct Words {
    rng: ChaCha8Rng,
    seen: HashSet<String>,
}

impl Words {
    fn fresh(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[self.rng.random_range(0..VOWELS.len())] as char);
            }
            if self.rng.random_bool(0.5) {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
            }
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

fn compose(rng: &mut ChaCha8Rng, mut parts: Vec<String>, filler: &[String], count: usize) -> String {
    for _ in 0..count {
        parts.push(filler[rng.random_range(0..filler.len())].clone());
    }
    parts.shuffle(rng);
    parts.join(" ")
}

struct Cluster {
    a: usize,
    c: Vec<usize>,
    x: usize,
    topic: usize,
    salient: [String; 2],
}

/// Build a task. Deterministic in `(seed, knobs)`.
pub fn generate(seed: u64, knobs: &Knobs) -> Result<SyntheticTask> {
    knobs.check()?;
    let mut words = Words {
        rng: keyed_rng("words", seed),
        seen: HashSet::new(),
    };
    let topics = words.many(knobs.num_topics);
    let filler = words.many(knobs.filler_vocab);
    let names: Vec<String> = {
        let mut rng = keyed_rng("names", seed);
        (0..knobs.kg_nodes)
            .map(|_| {
                if rng.random_bool(knobs.multiword_rate) {
                    format!("{} {}", words.fresh(), words.fresh())
                } else {
                    words.fresh()
                }
            })
            .collect()
    };
    let width = knobs.kg_nodes.to_string().len();
    let node_id = |i: usize| format!("E{i:0width$}");

    // graph: private clusters, then a noise component
    let mut rng = keyed_rng("graph", seed);
    let rel = |rng: &mut ChaCha8Rng| RELATIONS[rng.random_range(0..RELATIONS.len())].to_string();
    let mut triples = BTreeSet::new();
    let mut edge = |rng: &mut ChaCha8Rng, u: usize, v: usize, r: String| {
        let (h, t) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
        triples.insert((node_id(h), r, node_id(t)));
    };
    let mut clusters = Vec::with_capacity(knobs.num_queries);
    let per = cluster_size(knobs.relevant_per_query);
    for q in 0..knobs.num_queries {
        let base = q * per;
        let a = base;
        let mut c = Vec::new();
        for i in 0..knobs.relevant_per_query {
            let (b, ci) = (base + 1 + 2 * i, base + 2 + 2 * i);
            let r = rel(&mut rng);
            edge(&mut rng, a, b, r);
            if rng.random_bool(knobs.bridge_hop_rate) {
                let r = rel(&mut rng);
                edge(&mut rng, b, ci, r);
            } else {
                let r = rel(&mut rng);
                edge(&mut rng, a, ci, r);
            }
            c.push(ci);
        }
        let (y, x) = (base + per - 2, base + per - 1);
        let r = rel(&mut rng);
        edge(&mut rng, base + 1, y, r);
        let r = rel(&mut rng);
        edge(&mut rng, y, x, r);
        let topic = rng.random_range(0..knobs.num_topics);
        let salient = [words.fresh(), words.fresh()];
        clusters.push(Cluster {
            a,
            c,
            x,
            topic,
            salient,
        });
    }
    let noise: Vec<usize> = (knobs.num_queries * per..knobs.kg_nodes).collect();
    for &u in &noise {
        for _ in 0..knobs.noise_edges_per_node {
            let v = noise[rng.random_range(0..noise.len())];
            if v != u {
                let r = rel(&mut rng);
                edge(&mut rng, u, v, r);
            }
        }
    }
    let lexicon: Vec<(String, String)> = names.iter().enumerate().map(|(i, n)| (node_id(i), n.clone())).collect();

    // documents, as (text, owning query or none, relevant)
    let mut rng = keyed_rng("docs", seed);
    let noise_name = |rng: &mut ChaCha8Rng| names[noise[rng.random_range(0..noise.len())]].clone();
    let mut raw: Vec<(String, Option<usize>)> = Vec::with_capacity(knobs.corpus_size);
    let other_topic = |rng: &mut ChaCha8Rng, t: usize| {
        let o = rng.random_range(0..knobs.num_topics - 1);
        if o >= t {
            o + 1
        } else {
            o
        }
    };
    for (q, cl) in clusters.iter().enumerate() {
        for &c in &cl.c {
            let parts = vec![topics[cl.topic].clone(), names[c].clone()];
            raw.push((compose(&mut rng, parts, &filler, knobs.filler_per_doc), Some(q)));
        }
        for _ in 0..knobs.distractors_per_query {
            let mut parts = vec![cl.salient[0].clone(), cl.salient[1].clone()];
            parts.push(if rng.random_bool(knobs.distractor_topic_rate) {
                topics[cl.topic].clone()
            } else {
                topics[other_topic(&mut rng, cl.topic)].clone()
            });
            for _ in 0..knobs.entities_per_doc {
                parts.push(noise_name(&mut rng));
            }
            raw.push((compose(&mut rng, parts, &filler, knobs.filler_per_doc), None));
        }
        for _ in 0..knobs.decoys_per_query {
            let parts = vec![topics[cl.topic].clone(), names[cl.x].clone()];
            raw.push((compose(&mut rng, parts, &filler, knobs.filler_per_doc), None));
        }
    }
    while raw.len() < knobs.corpus_size {
        let mut parts = vec![topics[rng.random_range(0..knobs.num_topics)].clone()];
        for _ in 0..knobs.entities_per_doc {
            parts.push(noise_name(&mut rng));
        }
        raw.push((compose(&mut rng, parts, &filler, knobs.filler_per_doc), None));
    }
    raw.shuffle(&mut rng);
    let dw = knobs.corpus_size.to_string().len();
    let mut qrels = Qrels::new();
    let docs: Vec<Document> = raw
        .into_iter()
        .enumerate()
        .map(|(i, (text, owner))| {
            let id = format!("D{i:0dw$}");
            if let Some(q) = owner {
                qrels.insert(query_id(q, knobs.num_queries), id.clone(), 1);
            }
            Document::new(id, text)
        })
        .collect();

    let mut rng = keyed_rng("queries", seed);
    let queries: Vec<Query> = clusters
        .iter()
        .enumerate()
        .map(|(q, cl)| {
            let mut parts = [
                names[cl.a].clone(),
                cl.salient[0].clone(),
                cl.salient[1].clone(),
                topics[cl.topic].clone(),
            ];
            parts.shuffle(&mut rng);
            Query::new(query_id(q, knobs.num_queries), parts.join(" "))
        })
        .collect();
    let mut ids: Vec<String> = queries.iter().map(|q| q.id.clone()).collect();
    ids.shuffle(&mut keyed_rng("split", seed));
    let n_test = ((knobs.num_queries as f64 * knobs.test_fraction).round() as usize).clamp(1, knobs.num_queries - 1);
    let mut test_queries = ids.split_off(ids.len() - n_test);
    let mut train_queries = ids;
    train_queries.sort();
    test_queries.sort();

    let triples: Vec<(String, String, String)> = triples.into_iter().collect();
    let kg = KnowledgeGraph::from_parts(triples.clone(), lexicon.clone())?;
    let index = build_index(&docs)?;
    let bm25 = bm25_run(&index, &queries);
    let oracle = oracle_run(&kg, &docs, &queries, &bm25);
    let metric = [Metric::Ndcg(10)];
    let bm25_ndcg10 = evaluate_run(&bm25, &qrels, &metric)?.means[0].1;
    let oracle_ndcg10 = evaluate_run(&oracle, &qrels, &metric)?.means[0].1;
    if oracle_ndcg10 < ORACLE_MIN_NDCG {
        return Err(SynthError::OracleTooWeak(oracle_ndcg10).into());
    }
    let manifest = Manifest {
        profile: PROFILE.into(),
        seed,
        knobs: knobs.clone(),
        num_docs: docs.len(),
        num_queries: queries.len(),
        num_train_queries: train_queries.len(),
        num_test_queries: test_queries.len(),
        kg_nodes: kg.num_nodes(),
        kg_triples: kg.num_triples(),
        bm25_ndcg10,
        oracle_ndcg10,
    };
    Ok(SyntheticTask {
        docs,
        queries,
        qrels,
        triples,
        lexicon,
        train_queries,
        test_queries,
        manifest,
    })
}

fn query_id(q: usize, n: usize) -> String {
    let w = n.to_string().len();
    format!("Q{q:0w$}")
}

/// BM25 top-100 for every query.
pub fn bm25_run(index: &InvertedIndex, queries: &[Query]) -> RunRanking {
    let mut run = RunRanking::new("bm25");
    for q in queries {
        run.insert(q.id.clone(), index.retrieve_topk(q, DEFAULT_TOP_K))
            .expect("retrieval yields unique ids");
    }
    run
}

/// Number of (query entity, doc entity) pairs joined by a path of length <= 2.
pub fn two_hop_links(kg: &KnowledgeGraph, query: &BTreeSet<usize>, doc: &BTreeSet<usize>) -> usize {
    let mut n = 0;
    for &a in query {
        let na = kg.neighbors(a);
        for &b in doc {
            let nb = kg.neighbors(b);
            let linked = a == b
                || na.binary_search(&b).is_ok()
                || na.iter().any(|w| *w != a && *w != b && nb.binary_search(w).is_ok());
            n += usize::from(linked);
        }
    }
    n
}

/// Re-score a candidate run by 2-hop connectivity, BM25 as tie-break.
pub fn oracle_run(kg: &KnowledgeGraph, docs: &[Document], queries: &[Query], candidates: &RunRanking) -> RunRanking {
    let linker = EntityLinker::new(kg);
    let seeds = |text: &str, src| -> BTreeSet<usize> {
        linker
            .link(text, src)
            .into_iter()
            .filter_map(|m| kg.index_of(&m.node))
            .collect()
    };
    let texts: BTreeMap<&str, &str> = docs.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let mut run = RunRanking::new("oracle");
    for q in queries {
        let qs = seeds(&q.text, MentionSource::Query);
        let scored = candidates
            .get(&q.id)
            .unwrap_or(&[])
            .iter()
            .map(|(d, s)| {
                let ds = seeds(texts.get(d.as_str()).copied().unwrap_or(""), MentionSource::Document);
                (d.clone(), 1e3 * two_hop_links(kg, &qs, &ds) as f64 + s)
            })
            .collect();
        run.insert(q.id.clone(), scored).expect("unique candidates");
    }
    run
}

impl SyntheticTask {
    pub fn kg(&self) -> Result<KnowledgeGraph> {
        Ok(KnowledgeGraph::from_parts(self.triples.clone(), self.lexicon.clone())?)
    }

    pub fn select_queries(&self, ids: &[String]) -> Vec<Query> {
        let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        self.queries
            .iter()
            .filter(|q| keep.contains(q.id.as_str()))
            .cloned()
            .collect()
    }

    pub fn select_qrels(&self, ids: &[String]) -> Qrels {
        let mut out = Qrels::new();
        for q in ids {
            if let Some(j) = self.qrels.judged(q) {
                for (d, g) in j {
                    out.insert(q.clone(), d.clone(), *g);
                }
            }
        }
        out
    }

    /// One directory in the standard file formats plus `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("corpus.jsonl"), to_jsonl(&self.docs)?.as_bytes())?;
        write_atomic(&dir.join("queries.jsonl"), to_jsonl(&self.queries)?.as_bytes())?;
        for (name, ids) in [("train", &self.train_queries), ("test", &self.test_queries)] {
            let qs = self.select_queries(ids);
            write_atomic(&dir.join(format!("{name}_queries.jsonl")), to_jsonl(&qs)?.as_bytes())?;
            write_atomic(
                &dir.join(format!("{name}_qrels.txt")),
                self.select_qrels(ids).to_trec().as_bytes(),
            )?;
        }
        write_atomic(&dir.join("qrels.txt"), self.qrels.to_trec().as_bytes())?;
        let kg: String = self
            .triples
            .iter()
            .map(|(h, r, t)| format!("{h}\t{r}\t{t}\n"))
            .collect();
        write_atomic(&dir.join("kg.tsv"), kg.as_bytes())?;
        let lex: String = self.lexicon.iter().map(|(n, s)| format!("{n}\t{s}\n")).collect();
        write_atomic(&dir.join("lexicon.tsv"), lex.as_bytes())?;
        write_json(&dir.join("manifest.json"), &self.manifest)
    }
}
