use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape and regularisation of the ranker. Serialized as flat JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Text-only encoder layers before fusion starts.
    pub text_layers: usize,
    /// Fused layers (text + graph + interaction) on top.
    pub fused_layers: usize,
    pub d_text: usize,
    pub d_graph: usize,
    pub heads: usize,
    /// Bottleneck width, split in halves between the streams.
    pub d_bottleneck: usize,
    pub d_proj: usize,
    /// Feed-forward width multiplier for both streams.
    pub ff_mult: usize,
    pub max_len: usize,
    pub alpha: f64,
    /// Replace every subgraph by the bare interaction node.
    pub text_only: bool,
    /// Seed for entity vectors (shared across all subgraphs).
    pub node_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text_layers: 9,
            fused_layers: 3,
            d_text: 64,
            d_graph: 200,
            heads: 4,
            d_bottleneck: 32,
            d_proj: 100,
            ff_mult: 4,
            max_len: 512,
            alpha: 0.01,
            text_only: false,
            node_seed: 42,
        }
    }
}

/// The smallest prompt that still fits markers plus one query word.
pub const MIN_MAX_LEN: usize = 8;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.fused_layers == 0 {
            return fail("fused_layers must be at least 1".into());
        }
        if self.d_text == 0 || self.d_graph == 0 || self.d_proj == 0 || self.ff_mult == 0 {
            return fail("hidden sizes must be positive".into());
        }
        if self.heads == 0 || !self.d_text.is_multiple_of(self.heads) {
            return fail(format!("d_text {} not divisible by heads {}", self.d_text, self.heads));
        }
        if self.d_bottleneck == 0 || !self.d_bottleneck.is_multiple_of(2) {
            return fail(format!("d_bottleneck {} must be even and positive", self.d_bottleneck));
        }
        if self.max_len < MIN_MAX_LEN {
            return fail(format!("max_len {} below {MIN_MAX_LEN}", self.max_len));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha {} must be finite and non-negative", self.alpha));
        }
        Ok(())
    }

    pub fn total_layers(&self) -> usize {
        self.text_layers + self.fused_layers
    }

    pub fn d_head(&self) -> usize {
        self.d_text / self.heads
    }
}
