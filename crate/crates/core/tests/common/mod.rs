//! Generators and fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use kgrank::corpus::{Document, Query};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// Between 1 and 12 documents of 1 to 8 tokens from a small vocabulary, so
/// ties and repeated terms are common.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Document> {
    let n = rng.random_range(1..=12);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=8);
            let words: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            Document::new(format!("d{i:02}"), words.join(" "))
        })
        .collect()
}

pub fn random_query_terms(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(1..=4);
    let mut terms: Vec<String> = (0..len)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
        .collect();
    if rng.random_bool(0.2) {
        terms.push("zzz".into());
    }
    terms
}

/// Random multi-relational graph over at most `max_nodes` nodes, as raw
/// string triples, plus query and document seed sets drawn from its nodes.
pub struct RandomGraph {
    pub triples: Vec<(String, String, String)>,
    pub nodes: Vec<String>,
    pub query_seeds: BTreeSet<String>,
    pub doc_seeds: BTreeSet<String>,
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> RandomGraph {
    let n = rng.random_range(2..=max_nodes);
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    let density = rng.random_range(0.02..0.25);
    let mut triples = Vec::new();
    for h in 0..n {
        for t in 0..n {
            if rng.random_bool(density) {
                let r = ["isa", "treats", "causes"][rng.random_range(0..3)];
                triples.push((nodes[h].clone(), r.to_string(), nodes[t].clone()));
            }
        }
    }
    if triples.is_empty() {
        triples.push((nodes[0].clone(), "isa".into(), nodes[1].clone()));
    }
    let mut pool = nodes.clone();
    pool.shuffle(rng);
    let nq = rng.random_range(0..=3.min(n));
    let nd = rng.random_range(0..=3.min(n));
    let query_seeds = pool[..nq].iter().cloned().collect();
    pool.shuffle(rng);
    let doc_seeds = pool[..nd].iter().cloned().collect();
    RandomGraph {
        triples,
        nodes,
        query_seeds,
        doc_seeds,
    }
}

/// A ranking over a pool of ids with graded judgments for a random subset.
pub struct RankingInstance {
    pub ranking: Vec<String>,
    pub grades: BTreeMap<String, u32>,
}

impl RankingInstance {
    pub fn relevant(&self) -> BTreeSet<String> {
        self.grades
            .iter()
            .filter(|(_, g)| **g > 0)
            .map(|(d, _)| d.clone())
            .collect()
    }
}

pub fn random_ranking(rng: &mut ChaCha8Rng) -> RankingInstance {
    let pool = rng.random_range(1..=40);
    let mut ids: Vec<String> = (0..pool).map(|i| format!("doc{i}")).collect();
    ids.shuffle(rng);
    let cut = rng.random_range(0..=pool);
    let ranking = ids[..cut].to_vec();
    let mut grades = BTreeMap::new();
    for id in &ids {
        if rng.random_bool(0.3) {
            grades.insert(id.clone(), rng.random_range(0..=3));
        }
    }
    RankingInstance { ranking, grades }
}

/// The five-document fixture used by the BM25 and CLI tests.
pub fn fixture_docs() -> Vec<Document> {
    vec![
        Document::new("d1", "a b c"),
        Document::new("d2", "a a d"),
        Document::new("d3", "b e"),
        Document::new("d4", "c c c f"),
        Document::new("d5", "g"),
    ]
}

/// Hand-evaluated BM25 (k1 = 1.2, b = 0.75) of the query "a c" on the
/// fixture. Lengths 3, 3, 2, 4, 1 give avgdl 2.6; both terms have df 2, so
/// idf = ln(1 + 3.5 / 2.5) = ln 2.4.
pub fn fixture_expected_scores() -> Vec<(&'static str, f64)> {
    let idf = 2.4f64.ln();
    let norm3 = 0.25 + 0.75 * 3.0 / 2.6;
    let norm4 = 0.25 + 0.75 * 4.0 / 2.6;
    let d1 = 2.0 * idf * 2.2 / (1.0 + 1.2 * norm3);
    let d2 = idf * 2.0 * 2.2 / (2.0 + 1.2 * norm3);
    let d4 = idf * 3.0 * 2.2 / (3.0 + 1.2 * norm4);
    vec![("d1", d1), ("d4", d4), ("d2", d2)]
}

pub fn write_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    let body: String = fixture_docs()
        .iter()
        .map(|d| serde_json::to_string(d).unwrap() + "\n")
        .collect();
    std::fs::write(&corpus, body).unwrap();
    let queries = dir.join("queries.jsonl");
    let qs = [Query::new("q1", "a c"), Query::new("q2", "b"), Query::new("q3", "zzz")];
    let body: String = qs.iter().map(|q| serde_json::to_string(q).unwrap() + "\n").collect();
    std::fs::write(&queries, body).unwrap();
    let qrels = dir.join("qrels.txt");
    std::fs::write(&qrels, "q1 0 d4 1\nq1 0 d2 2\nq2 0 d3 1\nq3 0 d5 1\n").unwrap();
    (corpus, queries, qrels)
}
