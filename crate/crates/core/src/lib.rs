//! Knowledge-graph-enriched document re-ranking at desk scale.
//!
//! BM25 first-stage retrieval, entity linking and 2-hop subgraphs, a small
//! encoder-decoder ranker with graph attention and a Gaussian bottleneck
//! between the modalities, training, TREC-style evaluation, and a synthetic
//! task generator where the graph is needed to rank well.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod io;
pub mod kg;
pub mod model;
pub mod oracle;
pub mod pipeline;
mod rng;
pub mod selftest;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use rng::{keyed_rng, stream_rng};
