//! Documents, queries and graded relevance judgments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{read_jsonl, read_string};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Documents in file order with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.id.is_empty() {
                return Err(Error::Config(format!("document at position {i} has an empty id")));
            }
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(crate::index::IndexError::DuplicateDoc(d.id.clone()).into());
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_jsonl(path)?)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|i| &self.docs[*i])
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let queries: Vec<Query> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for q in &queries {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::Config(format!("duplicate query id `{}`", q.id)));
        }
    }
    Ok(queries)
}

/// Graded judgments; absent pairs have grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) {
        self.grades.entry(query.into()).or_default().insert(doc.into(), grade);
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.grades.get(query).and_then(|m| m.get(doc)).copied().unwrap_or(0)
    }

    /// All judged documents of a query, including grade-0 entries.
    pub fn judged(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query)
    }

    pub fn relevant(&self, query: &str) -> BTreeSet<&str> {
        self.grades
            .get(query)
            .map(|m| m.iter().filter(|(_, g)| **g > 0).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query: &str) -> bool {
        self.grades.contains_key(query)
    }

    /// `(query, doc)` pairs with grade > 0, in sorted order.
    pub fn positives(&self) -> Vec<(&str, &str)> {
        self.grades
            .iter()
            .flat_map(|(q, m)| {
                m.iter()
                    .filter(|(_, g)| **g > 0)
                    .map(move |(d, _)| (q.as_str(), d.as_str()))
            })
            .collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut qrels = Self::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected `qid 0 docid grade`, got {} fields", fields.len()),
                ));
            }
            let grade: u32 = fields[3].parse().map_err(|_| {
                Error::parse(
                    path,
                    i + 1,
                    format!("grade `{}` is not a non-negative integer", fields[3]),
                )
            })?;
            qrels.insert(fields[0], fields[2], grade);
        }
        Ok(qrels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_string(path)?, path)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.grades {
            for (d, g) in docs {
                out.push_str(&format!("{q} 0 {d} {g}\n"));
            }
        }
        out
    }
}
