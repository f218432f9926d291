use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{KgError, INTERACTION_RELATION, SELF_RELATION};
use crate::io::read_string;
use crate::{Error, Result};

/// `(head, relation, tail)` as interned indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Multi-relational graph with canonical (sorted) node and relation order, so
/// anything derived from it is independent of input line order.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    node_ids: Vec<String>,
    node_index: HashMap<String, usize>,
    names: Vec<Vec<String>>,
    relations: Vec<String>,
    relation_index: HashMap<String, usize>,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    /// Build from string triples plus optional `(node id, surface name)` pairs.
    /// Nodes that appear only in the lexicon are kept as isolated nodes.
    pub fn from_parts<T, L>(triples: T, lexicon: L) -> Result<Self, KgError>
    where
        T: IntoIterator<Item = (String, String, String)>,
        L: IntoIterator<Item = (String, String)>,
    {
        let triples: BTreeSet<(String, String, String)> = triples.into_iter().collect();
        let mut names: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut relations = BTreeSet::new();
        for (h, r, t) in &triples {
            if r == INTERACTION_RELATION || r == SELF_RELATION {
                return Err(KgError::ReservedRelation(r.clone()));
            }
            names.entry(h.clone()).or_default();
            names.entry(t.clone()).or_default();
            relations.insert(r.clone());
        }
        for (node, name) in lexicon {
            names.entry(node).or_default().insert(name);
        }

        let node_ids: Vec<String> = names.keys().cloned().collect();
        let node_index: HashMap<String, usize> = node_ids.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let names: Vec<Vec<String>> = names
            .into_iter()
            .map(|(id, set)| {
                if set.is_empty() {
                    vec![id]
                } else {
                    set.into_iter().collect()
                }
            })
            .collect();
        let relations: Vec<String> = relations.into_iter().collect();
        let relation_index: HashMap<String, usize> =
            relations.iter().enumerate().map(|(i, r)| (r.clone(), i)).collect();

        let mut interned: Vec<Triple> = triples
            .iter()
            .map(|(h, r, t)| Triple {
                head: node_index[h],
                relation: relation_index[r],
                tail: node_index[t],
            })
            .collect();
        interned.sort_unstable();

        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_ids.len()];
        for t in &interned {
            if t.head != t.tail {
                adjacency[t.head].insert(t.tail);
                adjacency[t.tail].insert(t.head);
            }
        }
        Ok(Self {
            node_ids,
            node_index,
            names,
            relations,
            relation_index,
            triples: interned,
            adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.node_ids[index]
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn surface_names(&self, index: usize) -> &[String] {
        &self.names[index]
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_name(&self, index: usize) -> &str {
        &self.relations[index]
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Undirected neighbours, sorted, excluding self-loops.
    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }

    pub fn contains_triple(&self, head: &str, relation: &str, tail: &str) -> bool {
        match (self.index_of(head), self.relation_index(relation), self.index_of(tail)) {
            (Some(head), Some(relation), Some(tail)) => {
                self.triples.binary_search(&Triple { head, relation, tail }).is_ok()
            }
            _ => false,
        }
    }
}

fn parse_tsv(text: &str, path: &Path, fields: usize) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != fields || parts.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {fields} non-empty tab-separated fields"),
            ));
        }
        rows.push(parts.iter().map(|p| p.trim().to_string()).collect());
    }
    Ok(rows)
}

/// Load `head<TAB>relation<TAB>tail` triples and an optional
/// `node_id<TAB>surface name` lexicon.
pub fn load_kg(path: &Path, lexicon: Option<&Path>) -> Result<KnowledgeGraph> {
    let rows = parse_tsv(&read_string(path)?, path, 3)?;
    let lex_rows = match lexicon {
        Some(p) => parse_tsv(&read_string(p)?, p, 2)?,
        None => Vec::new(),
    };
    let triples = rows.into_iter().map(|mut r| {
        let t = r.pop().unwrap_or_default();
        let rel = r.pop().unwrap_or_default();
        let h = r.pop().unwrap_or_default();
        (h, rel, t)
    });
    let lex = lex_rows.into_iter().map(|mut r| {
        let name = r.pop().unwrap_or_default();
        let node = r.pop().unwrap_or_default();
        (node, name)
    });
    Ok(KnowledgeGraph::from_parts(triples, lex)?)
}
