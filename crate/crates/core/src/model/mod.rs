//! Encoder-decoder relevance model with knowledge-graph fusion.
//!
//! A prompt `[<int>, query:, q.., document:, d.., relevant:]` runs through
//! text-only layers, then fused layers where a graph-attention step runs on
//! the subgraph and a Gaussian bottleneck exchanges information between the
//! interaction token and the interaction node. A single decoder step reads
//! off `p(<true>)` against `<false>`.

mod checkpoint;
mod config;
pub mod layers;
mod prompt;
mod ranker;
mod vocab;

pub use config::{ModelConfig, MIN_MAX_LEN};
pub use layers::{kl_closed_form, GraphEdges};
pub use prompt::{build_prompt, PROMPT_MARKERS};
pub use ranker::{param_specs, ForwardTrace, ForwardVars, Init, Noise, PairInput, ParamSpec, RankerModel};
pub use vocab::{Vocab, RESERVED};

use crate::kg::KgError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error("relation `{0}` is not known to the model")]
    UnknownRelation(String),
    #[error("noise must hold {expected} rows of width {width}")]
    Noise { expected: usize, width: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Kg(#[from] KgError),
}
