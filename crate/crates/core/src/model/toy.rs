// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random models for tests and demos.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::bundle::{ModelBundle, Tensor};
use crate::model::config::{names, Activation, LayerSharing, ModelConfig};

/// Generate a model whose weights depend only on `(seed, config)`.
///
/// Each tensor draws from its own stream keyed by the seed and the tensor
/// name, so adding a tensor never perturbs the others.
pub fn generate_toy_model(seed: u64, config: &ModelConfig) -> Result<ModelBundle> {
    config.validate()?;
    let mut tensors = BTreeMap::new();
    for (name, shape) in config.tensor_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &name));
        let count: usize = shape.iter().product();
        let (center, spread) = init_for(&name, &shape);
        let data: Vec<f32> = (0..count)
            .map(|_| center + rng.random_range(-spread..=spread))
            .collect();
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    ModelBundle::new(
        config.clone(),
        tensors,
        format!("toy model, seed {seed}"),
    )
}

/// A small default architecture: tied layers, distinct embedding width.
pub fn toy_config(num_layers: usize, num_heads: usize, hidden_dim: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 48,
        hidden_dim,
        embedding_dim: (hidden_dim / 2).max(1),
        num_layers,
        num_heads,
        head_dim: hidden_dim / num_heads.max(1),
        ffn_dim: hidden_dim * 2,
        max_positions: 32,
        layer_sharing: LayerSharing::Tied,
        mask_token_id: 4,
        layernorm_epsilon: 1e-12,
        activation: Activation::GeluTanh,
    }
}

/// `(center, half-width)` of the uniform draw for a tensor.
fn init_for(name: &str, shape: &[usize]) -> (f32, f32) {
    if name.ends_with("layer_norm.weight") {
        (1.0, 0.2)
    } else if name.ends_with("layer_norm.bias") {
        (0.0, 0.1)
    } else if name == names::WORD_EMBEDDINGS || name == names::POSITION_EMBEDDINGS {
        (0.0, 1.0)
    } else if name == names::MLM_OUTPUT_BIAS {
        (0.0, 0.5)
    } else if shape.len() == 2 {
        // 1.5x the unit-gain width keeps random toys from washing out
        (0.0, (3.0 / shape[1] as f32).sqrt() * 1.5)
    } else {
        (0.0, 0.2)
    }
}

fn split_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, then one splitmix64 round with the seed
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    crate::splitmix64(seed ^ hash)
}
