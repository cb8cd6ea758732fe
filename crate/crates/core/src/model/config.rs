// SPDX-License-Identifier: MIT OR Apache-2.0

//! Architecture description for the encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TokenId;

/// Whether encoder layers share one parameter set (ALBERT) or own one each
/// (BERT, RoBERTa).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSharing {
    /// One parameter set reused by every layer.
    Tied,
    /// `num_layers` independent parameter sets.
    Untied,
}

/// Feed-forward and MLM-head nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exact GELU, `x * Phi(x)` (BERT, RoBERTa).
    Gelu,
    /// Tanh approximation of GELU (ALBERT's `gelu_new`).
    #[default]
    GeluTanh,
}

/// Shape and hyper-parameters of a masked-LM encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    /// Width of the token embeddings. When it differs from `hidden_dim` an
    /// embedding projection maps into the residual stream.
    pub embedding_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub layer_sharing: LayerSharing,
    pub mask_token_id: TokenId,
    pub layernorm_epsilon: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("ffn_dim", self.ffn_dim),
            ("max_positions", self.max_positions),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidConfig(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.num_heads * self.head_dim != self.hidden_dim {
            return Err(Error::InvalidConfig(format!(
                "num_heads {} x head_dim {} != hidden_dim {}",
                self.num_heads, self.head_dim, self.hidden_dim
            )));
        }
        if (self.mask_token_id as usize) >= self.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "mask_token_id {} is outside a vocabulary of {}",
                self.mask_token_id, self.vocab_size
            )));
        }
        if !(self.layernorm_epsilon.is_finite() && self.layernorm_epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "layernorm_epsilon must be a small positive number, got {}",
                self.layernorm_epsilon
            )));
        }
        Ok(())
    }

    /// Number of stored encoder parameter sets.
    pub fn num_parameter_sets(&self) -> usize {
        match self.layer_sharing {
            LayerSharing::Tied => 1,
            LayerSharing::Untied => self.num_layers,
        }
    }

    /// Parameter set read by `layer`.
    pub fn parameter_set(&self, layer: usize) -> usize {
        match self.layer_sharing {
            LayerSharing::Tied => 0,
            LayerSharing::Untied => layer,
        }
    }

    pub fn has_embedding_projection(&self) -> bool {
        self.embedding_dim != self.hidden_dim
    }

    /// Every tensor the configuration requires, with its shape.
    ///
    /// Linear weights are stored `[out, in]`; see the crate docs for the full
    /// naming scheme.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let (v, e, h, f, p) = (
            self.vocab_size,
            self.embedding_dim,
            self.hidden_dim,
            self.ffn_dim,
            self.max_positions,
        );
        let mut specs = vec![
            (names::WORD_EMBEDDINGS.to_string(), vec![v, e]),
            (names::POSITION_EMBEDDINGS.to_string(), vec![p, e]),
            (names::EMBEDDING_NORM_WEIGHT.to_string(), vec![e]),
            (names::EMBEDDING_NORM_BIAS.to_string(), vec![e]),
        ];
        if self.has_embedding_projection() {
            specs.push((names::EMBEDDING_PROJECTION_WEIGHT.to_string(), vec![h, e]));
            specs.push((names::EMBEDDING_PROJECTION_BIAS.to_string(), vec![h]));
        }
        for set in 0..self.num_parameter_sets() {
            for (suffix, shape) in [
                (names::QUERY_WEIGHT, vec![h, h]),
                (names::QUERY_BIAS, vec![h]),
                (names::KEY_WEIGHT, vec![h, h]),
                (names::KEY_BIAS, vec![h]),
                (names::VALUE_WEIGHT, vec![h, h]),
                (names::VALUE_BIAS, vec![h]),
                (names::OUTPUT_WEIGHT, vec![h, h]),
                (names::OUTPUT_BIAS, vec![h]),
                (names::ATTENTION_NORM_WEIGHT, vec![h]),
                (names::ATTENTION_NORM_BIAS, vec![h]),
                (names::FFN_IN_WEIGHT, vec![f, h]),
                (names::FFN_IN_BIAS, vec![f]),
                (names::FFN_OUT_WEIGHT, vec![h, f]),
                (names::FFN_OUT_BIAS, vec![h]),
                (names::FFN_NORM_WEIGHT, vec![h]),
                (names::FFN_NORM_BIAS, vec![h]),
            ] {
                specs.push((names::layer(set, suffix), shape));
            }
        }
        specs.extend([
            (names::MLM_DENSE_WEIGHT.to_string(), vec![e, h]),
            (names::MLM_DENSE_BIAS.to_string(), vec![e]),
            (names::MLM_NORM_WEIGHT.to_string(), vec![e]),
            (names::MLM_NORM_BIAS.to_string(), vec![e]),
            (names::MLM_OUTPUT_BIAS.to_string(), vec![v]),
        ]);
        specs
    }
}

/// Canonical tensor names.
pub mod names {
    pub const WORD_EMBEDDINGS: &str = "embeddings.word.weight";
    pub const POSITION_EMBEDDINGS: &str = "embeddings.position.weight";
    pub const EMBEDDING_NORM_WEIGHT: &str = "embeddings.layer_norm.weight";
    pub const EMBEDDING_NORM_BIAS: &str = "embeddings.layer_norm.bias";
    pub const EMBEDDING_PROJECTION_WEIGHT: &str = "embeddings.projection.weight";
    pub const EMBEDDING_PROJECTION_BIAS: &str = "embeddings.projection.bias";

    pub const QUERY_WEIGHT: &str = "attention.query.weight";
    pub const QUERY_BIAS: &str = "attention.query.bias";
    pub const KEY_WEIGHT: &str = "attention.key.weight";
    pub const KEY_BIAS: &str = "attention.key.bias";
    pub const VALUE_WEIGHT: &str = "attention.value.weight";
    pub const VALUE_BIAS: &str = "attention.value.bias";
    pub const OUTPUT_WEIGHT: &str = "attention.output.weight";
    pub const OUTPUT_BIAS: &str = "attention.output.bias";
    pub const ATTENTION_NORM_WEIGHT: &str = "attention.layer_norm.weight";
    pub const ATTENTION_NORM_BIAS: &str = "attention.layer_norm.bias";
    pub const FFN_IN_WEIGHT: &str = "ffn.intermediate.weight";
    pub const FFN_IN_BIAS: &str = "ffn.intermediate.bias";
    pub const FFN_OUT_WEIGHT: &str = "ffn.output.weight";
    pub const FFN_OUT_BIAS: &str = "ffn.output.bias";
    pub const FFN_NORM_WEIGHT: &str = "ffn.layer_norm.weight";
    pub const FFN_NORM_BIAS: &str = "ffn.layer_norm.bias";

    pub const MLM_DENSE_WEIGHT: &str = "mlm.dense.weight";
    pub const MLM_DENSE_BIAS: &str = "mlm.dense.bias";
    pub const MLM_NORM_WEIGHT: &str = "mlm.layer_norm.weight";
    pub const MLM_NORM_BIAS: &str = "mlm.layer_norm.bias";
    /// Output bias of the MLM decoder; the decoder matrix is tied to the word
    /// embeddings.
    pub const MLM_OUTPUT_BIAS: &str = "mlm.bias";

    /// Full name of a per-layer tensor in parameter set `set`.
    pub fn layer(set: usize, suffix: &str) -> String {
        format!("encoder.layers.{set}.{suffix}")
    }
}
