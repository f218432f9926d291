//! Inverted index and BM25 first-stage retrieval.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Query};
use crate::io::{read_string, write_atomic};
use crate::text::tokenize;
use crate::{Error, Result};

/// Candidate depth handed to the re-ranker.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("duplicate document id `{0}`")]
    DuplicateDoc(String),
    #[error("unknown document id `{0}`")]
    UnknownDoc(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// term -> (doc id, term frequency), sorted by doc id
    postings: BTreeMap<String, Vec<(String, u32)>>,
    doc_lengths: BTreeMap<String, u32>,
    avg_doc_length: f64,
    num_docs: usize,
}

/// One query term's contribution: `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl))`.
pub fn bm25_term_weight(params: Bm25Params, idf: f64, tf: f64, doc_len: f64, avg_len: f64) -> f64 {
    let norm = 1.0 - params.b + params.b * doc_len / avg_len;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

pub fn build_index(corpus: &[Document]) -> Result<InvertedIndex, IndexError> {
    let mut seen = HashSet::with_capacity(corpus.len());
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    let mut total: u64 = 0;
    for doc in corpus {
        if !seen.insert(doc.id.as_str()) {
            return Err(IndexError::DuplicateDoc(doc.id.clone()));
        }
        let terms = tokenize(&doc.text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in &terms {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push((doc.id.clone(), count));
        }
        doc_lengths.insert(doc.id.clone(), terms.len() as u32);
        total += terms.len() as u64;
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let num_docs = corpus.len();
    let avg_doc_length = if num_docs == 0 {
        0.0
    } else {
        total as f64 / num_docs as f64
    };
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        num_docs,
    })
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc: &str) -> Option<u32> {
        self.doc_lengths.get(doc).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_lengths.keys().map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> &[(String, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn term_freq(&self, term: &str, doc: &str) -> u32 {
        let list = self.postings(term);
        list.binary_search_by(|(d, _)| d.as_str().cmp(doc))
            .map(|i| list[i].1)
            .unwrap_or(0)
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let big_n = self.num_docs as f64;
        (1.0 + (big_n - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, params: Bm25Params, idf: f64, tf: u32, doc_len: u32) -> f64 {
        bm25_term_weight(params, idf, f64::from(tf), f64::from(doc_len), self.avg_doc_length)
    }

    pub fn bm25_score(&self, query_terms: &[String], doc: &str) -> Result<f64, IndexError> {
        self.bm25_score_with(Bm25Params::default(), query_terms, doc)
    }

    /// Duplicated query terms contribute once per occurrence.
    pub fn bm25_score_with(&self, params: Bm25Params, query_terms: &[String], doc: &str) -> Result<f64, IndexError> {
        let len = self
            .doc_length(doc)
            .ok_or_else(|| IndexError::UnknownDoc(doc.to_string()))?;
        let mut score = 0.0;
        for term in query_terms {
            let tf = self.term_freq(term, doc);
            if tf > 0 {
                score += self.term_weight(params, self.idf(term), tf, len);
            }
        }
        Ok(score)
    }

    /// Top-k documents with positive score, by score descending then doc id.
    pub fn retrieve_topk(&self, query: &Query, k: usize) -> Vec<(String, f64)> {
        self.retrieve_terms(&tokenize(&query.text), k)
    }

    pub fn retrieve_terms(&self, query_terms: &[String], k: usize) -> Vec<(String, f64)> {
        let params = Bm25Params::default();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        // same per-document summation order as `bm25_score`
        for term in query_terms {
            let idf = self.idf(term);
            for (doc, tf) in self.postings(term) {
                let len = self.doc_lengths[doc];
                *scores.entry(doc.as_str()).or_insert(0.0) += self.term_weight(params, idf, *tf, len);
            }
        }
        let mut ranked: Vec<(String, f64)> = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(d, s)| (d.to_string(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Invariant(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}
