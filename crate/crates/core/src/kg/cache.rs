use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::QuerySubgraph;
use crate::io::{read_jsonl, write_jsonl};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphCacheEntry {
    pub qid: String,
    pub docid: String,
    pub subgraph: QuerySubgraph,
}

/// Subgraphs keyed by `(query id, doc id)`, persisted as JSON lines in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubgraphCache {
    entries: BTreeMap<(String, String), QuerySubgraph>,
}

impl SubgraphCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, docid: impl Into<String>, sg: QuerySubgraph) {
        self.entries.insert((qid.into(), docid.into()), sg);
    }

    pub fn get(&self, qid: &str, docid: &str) -> Option<&QuerySubgraph> {
        self.entries.get(&(qid.to_string(), docid.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> Vec<SubgraphCacheEntry> {
        self.entries
            .iter()
            .map(|((q, d), sg)| SubgraphCacheEntry {
                qid: q.clone(),
                docid: d.clone(),
                subgraph: sg.clone(),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entries())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<SubgraphCacheEntry> = read_jsonl(path)?;
        let mut cache = Self::new();
        for e in entries {
            cache.insert(e.qid, e.docid, e.subgraph);
        }
        Ok(cache)
    }
}
