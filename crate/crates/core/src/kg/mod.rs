//! Knowledge graph storage, entity linking, and per-pair subgraph extraction.

mod cache;
mod embed;
mod graph;
mod link;
mod subgraph;

pub use cache::{SubgraphCache, SubgraphCacheEntry};
pub use embed::{init_node_embeddings, node_vector, NODE_INIT_STD};
pub use graph::{load_kg, KnowledgeGraph, Triple};
pub use link::{link_entities, EntityLinker, EntityMention, MentionSource, MAX_NGRAM};
pub use subgraph::{
    extract_subgraph, Provenance, QuerySubgraph, SubgraphEdge, SubgraphNode, DEFAULT_MAX_NODES, INTERACTION_NODE_ID,
};

/// Relation joining the interaction node to every subgraph node.
pub const INTERACTION_RELATION: &str = "__interaction__";
/// Relation of the implicit self-loop used during message passing.
pub const SELF_RELATION: &str = "__self__";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KgError {
    #[error("seed node `{0}` is not in the knowledge graph")]
    UnknownSeed(String),
    #[error("relation `{0}` is reserved")]
    ReservedRelation(String),
    #[error("max_nodes must be at least 1")]
    ZeroMaxNodes,
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
}
