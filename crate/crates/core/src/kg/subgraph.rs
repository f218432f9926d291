use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph, INTERACTION_RELATION};

/// Retained KG nodes per subgraph, excluding the interaction node.
pub const DEFAULT_MAX_NODES: usize = 10;

pub const INTERACTION_NODE_ID: &str = "<int>";

/// Why a node is in the subgraph. Declaration order is capping priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Interaction,
    Both,
    QuerySeed,
    DocSeed,
    Bridge,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::Interaction,
        Provenance::Both,
        Provenance::QuerySeed,
        Provenance::DocSeed,
        Provenance::Bridge,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphNode {
    pub id: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubgraphEdge {
    pub source: usize,
    pub relation: String,
    pub target: usize,
}

/// Per-pair graph: the interaction node first, then retained KG nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySubgraph {
    pub nodes: Vec<SubgraphNode>,
    pub edges: Vec<SubgraphEdge>,
}

impl QuerySubgraph {
    /// Interaction node only.
    pub fn empty() -> Self {
        Self {
            nodes: vec![SubgraphNode {
                id: INTERACTION_NODE_ID.to_string(),
                provenance: Provenance::Interaction,
            }],
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// KG node ids (interaction node excluded).
    pub fn kg_node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().skip(1).map(|n| n.id.as_str())
    }

    /// Edges that came from the parent graph.
    pub fn kg_edges(&self) -> impl Iterator<Item = &SubgraphEdge> {
        self.edges.iter().filter(|e| e.relation != INTERACTION_RELATION)
    }

    pub fn has_bridge(&self) -> bool {
        self.nodes.iter().any(|n| n.provenance == Provenance::Bridge)
    }
}

fn resolve<I, S>(kg: &KnowledgeGraph, seeds: I) -> Result<BTreeSet<usize>, KgError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    seeds
        .into_iter()
        .map(|s| {
            kg.index_of(s.as_ref())
                .ok_or_else(|| KgError::UnknownSeed(s.as_ref().to_string()))
        })
        .collect()
}

/// Seeds plus every node on a length-2 path between two distinct seeds.
///
/// Paths use undirected adjacency; retained edges keep their stored direction.
/// When over `max_nodes`, seeds are kept first (both, query, document), then
/// bridges by number of distinct adjacent seeds, ties by node id.
pub fn extract_subgraph<I, J, S, T>(
    kg: &KnowledgeGraph,
    query_seeds: I,
    doc_seeds: J,
    max_nodes: usize,
) -> Result<QuerySubgraph, KgError>
where
    I: IntoIterator<Item = S>,
    J: IntoIterator<Item = T>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    if max_nodes == 0 {
        return Err(KgError::ZeroMaxNodes);
    }
    let vq = resolve(kg, query_seeds)?;
    let vd = resolve(kg, doc_seeds)?;
    let seeds: BTreeSet<usize> = vq.union(&vd).copied().collect();

    // bridge -> number of distinct adjacent seeds
    let mut bridge_degree: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &seeds {
        for &w in kg.neighbors(s) {
            if !seeds.contains(&w) {
                *bridge_degree.entry(w).or_default() += 1;
            }
        }
    }
    let mut bridges: Vec<(usize, usize)> = bridge_degree.into_iter().filter(|(_, c)| *c >= 2).collect();
    bridges.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut ordered: Vec<(usize, Provenance)> = Vec::new();
    for &s in &seeds {
        if vq.contains(&s) && vd.contains(&s) {
            ordered.push((s, Provenance::Both));
        }
    }
    ordered.extend(vq.difference(&vd).map(|s| (*s, Provenance::QuerySeed)));
    ordered.extend(vd.difference(&vq).map(|s| (*s, Provenance::DocSeed)));
    ordered.extend(bridges.iter().map(|(w, _)| (*w, Provenance::Bridge)));
    ordered.truncate(max_nodes);

    let local: BTreeMap<usize, usize> = ordered
        .iter()
        .enumerate()
        .map(|(i, (node, _))| (*node, i + 1))
        .collect();

    let mut nodes = Vec::with_capacity(ordered.len() + 1);
    nodes.push(SubgraphNode {
        id: INTERACTION_NODE_ID.to_string(),
        provenance: Provenance::Interaction,
    });
    nodes.extend(ordered.iter().map(|(n, p)| SubgraphNode {
        id: kg.node_id(*n).to_string(),
        provenance: *p,
    }));

    let mut edges = Vec::new();
    for t in kg.triples() {
        if let (Some(&s), Some(&d)) = (local.get(&t.head), local.get(&t.tail)) {
            edges.push(SubgraphEdge {
                source: s,
                relation: kg.relation_name(t.relation).to_string(),
                target: d,
            });
        }
    }
    for i in 1..nodes.len() {
        for (source, target) in [(0, i), (i, 0)] {
            edges.push(SubgraphEdge {
                source,
                relation: INTERACTION_RELATION.to_string(),
                target,
            });
        }
    }
    Ok(QuerySubgraph { nodes, edges })
}
