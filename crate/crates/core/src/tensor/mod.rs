//! Minimal reverse-mode differentiable array engine.
//!
//! Everything is `f64`. Randomness never enters a primitive: noise for the
//! reparameterized bottleneck is passed in as a plain [`Array`], so a forward
//! pass is fully replayable given its inputs.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::Array;
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use params::{Bound, ParamStore, CHECKPOINT_VERSION};
pub use tape::{Tape, Var, LAYER_NORM_EPS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("{op}: {reason}")]
    Domain { op: &'static str, reason: &'static str },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("array of shape {shape:?} cannot hold {len} values")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("variable was not recorded on this tape")]
    ForeignVar,
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tape is full")]
    TapeFull,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("finite-difference objective returned a non-finite value")]
    NonFiniteObjective,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
