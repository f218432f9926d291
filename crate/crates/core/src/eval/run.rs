use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::EvalError;
use crate::io::{read_string, write_atomic};
use crate::{Error, Result};

/// Per-query ranked lists, each ordered by score descending, doc id ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRanking {
    pub tag: String,
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

fn sort_ranking(list: &mut [(String, f64)]) {
    list.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

impl RunRanking {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    /// Insert a query's candidates in any order; they are sorted here.
    pub fn insert(&mut self, qid: impl Into<String>, mut docs: Vec<(String, f64)>) -> Result<(), EvalError> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (d, _) in &docs {
            if !seen.insert(d.as_str()) {
                return Err(EvalError::DuplicateDoc(d.clone()));
            }
        }
        sort_ranking(&mut docs);
        self.rankings.insert(qid.into(), docs);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(qid).map(Vec::as_slice)
    }

    pub fn doc_ids(&self, qid: &str) -> Vec<&str> {
        self.get(qid)
            .map(|l| l.iter().map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rankings.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// `qid Q0 docid rank score tag`, rank 1-based.
    pub fn to_trec(&self) -> String {
        let tag = if self.tag.is_empty() { "run" } else { self.tag.as_str() };
        let mut out = String::new();
        for (q, docs) in &self.rankings {
            for (i, (d, s)) in docs.iter().enumerate() {
                out.push_str(&format!("{q} Q0 {d} {} {s} {tag}\n", i + 1));
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut tag = String::new();
        let mut raw: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = trimmed.split_whitespace().collect();
            if f.len() != 6 {
                return Err(Error::parse(path, i + 1, "expected `qid Q0 docid rank score tag`"));
            }
            let rank: usize = f[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad rank `{}`", f[3])))?;
            let score: f64 = f[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad score `{}`", f[4])))?;
            if tag.is_empty() {
                tag = f[5].to_string();
            }
            raw.entry(f[0].to_string())
                .or_default()
                .push((rank, f[2].to_string(), score));
        }
        let mut run = Self::new(tag);
        for (q, mut docs) in raw {
            docs.sort_by_key(|a| a.0);
            let list: Vec<(String, f64)> = docs.into_iter().map(|(_, d, s)| (d, s)).collect();
            run.insert(q, list)?;
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_string(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_trec().as_bytes())
    }
}
