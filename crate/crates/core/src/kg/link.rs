use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;
use crate::text::tokenize_with_spans;

/// Longest surface name, in tokens, that can match.
pub const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionSource {
    Query,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub node: String,
    /// Byte span in the source text.
    pub start: usize,
    pub end: usize,
    pub source: MentionSource,
}

/// Lexicon n-gram matcher over lowercased surface names.
#[derive(Debug, Clone)]
pub struct EntityLinker<'kg> {
    kg: &'kg KnowledgeGraph,
    names: HashMap<Vec<String>, usize>,
}

impl<'kg> EntityLinker<'kg> {
    pub fn new(kg: &'kg KnowledgeGraph) -> Self {
        let mut names: HashMap<Vec<String>, usize> = HashMap::new();
        for node in 0..kg.num_nodes() {
            for name in kg.surface_names(node) {
                let key: Vec<String> = tokenize_with_spans(name).into_iter().map(|t| t.term).collect();
                if key.is_empty() || key.len() > MAX_NGRAM {
                    continue;
                }
                // node indices follow sorted ids, so the smallest id wins a shared name
                names.entry(key).or_insert(node);
            }
        }
        Self { kg, names }
    }

    pub fn link(&self, text: &str, source: MentionSource) -> Vec<EntityMention> {
        let tokens = tokenize_with_spans(text);
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (start tok, len, node)
        for start in 0..tokens.len() {
            for len in 1..=MAX_NGRAM.min(tokens.len() - start) {
                let key: Vec<String> = tokens[start..start + len].iter().map(|t| t.term.clone()).collect();
                if let Some(&node) = self.names.get(&key) {
                    candidates.push((start, len, node));
                }
            }
        }
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; tokens.len()];
        let mut chosen = Vec::new();
        for (start, len, node) in candidates {
            if taken[start..start + len].iter().any(|t| *t) {
                continue;
            }
            taken[start..start + len].iter_mut().for_each(|t| *t = true);
            chosen.push((start, len, node));
        }
        chosen.sort_by_key(|c| c.0);
        chosen
            .into_iter()
            .map(|(start, len, node)| EntityMention {
                node: self.kg.node_id(node).to_string(),
                start: tokens[start].start,
                end: tokens[start + len - 1].end,
                source,
            })
            .collect()
    }
}

pub fn link_entities(text: &str, kg: &KnowledgeGraph, source: MentionSource) -> Vec<EntityMention> {
    EntityLinker::new(kg).link(text, source)
}
