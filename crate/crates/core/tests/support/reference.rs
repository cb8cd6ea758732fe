// SPDX-License-Identifier: MIT OR Apache-2.0

//! Naive reference encoder: explicit loops, `f64` everywhere, tensors read
//! by name. Shares no code with the production kernels.

#![allow(dead_code)]

use interchange_core::model::{Activation, LayerSharing, ModelBundle};
use interchange_core::patch::{Component, Head, PatchSet};

pub struct Reference {
    /// `[layer][position][hidden]` projected attention before the residual add.
    pub attention_projected: Vec<Vec<Vec<f64>>>,
    /// `[layer][position][hidden]` residual entering each layer.
    pub residual_in: Vec<Vec<Vec<f64>>>,
    /// `[position][vocab]`
    pub logits: Vec<Vec<f64>>,
}

fn mat(model: &ModelBundle, name: &str) -> (Vec<usize>, Vec<f64>) {
    let t = model.tensor(name).unwrap_or_else(|| panic!("missing {name}"));
    (t.shape().to_vec(), t.data().iter().map(|&v| v as f64).collect())
}

fn affine(x: &[Vec<f64>], model: &ModelBundle, w: &str, b: &str) -> Vec<Vec<f64>> {
    let (shape, w) = mat(model, w);
    let (_, b) = mat(model, b);
    let (out, inp) = (shape[0], shape[1]);
    x.iter()
        .map(|row| {
            (0..out)
                .map(|o| {
                    let mut s = b[o];
                    for i in 0..inp {
                        s += w[o * inp + i] * row[i];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn norm(x: &[Vec<f64>], model: &ModelBundle, g: &str, b: &str, eps: f64) -> Vec<Vec<f64>> {
    let (_, g) = mat(model, g);
    let (_, b) = mat(model, b);
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + eps).sqrt() * g[i] + b[i])
                .collect()
        })
        .collect()
}

fn gelu(x: f64, act: Activation) -> f64 {
    match act {
        Activation::Gelu => 0.5 * x * (1.0 + statrs::function::erf::erf(x / 2f64.sqrt())),
        Activation::GeluTanh => {
            0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
        }
    }
}

fn overwrite(buf: &mut [Vec<f64>], patches: &PatchSet, layer: usize, component: Component, head_dim: usize) {
    for p in patches.iter() {
        let s = p.site;
        if s.layer != layer || s.component != component {
            continue;
        }
        let start = match s.head {
            Some(Head::Index(h)) => h * head_dim,
            _ => 0,
        };
        for (i, v) in p.values.iter().enumerate() {
            buf[s.position][start + i] = *v as f64;
        }
    }
}

pub fn reference_forward(model: &ModelBundle, tokens: &[u32], patches: &PatchSet) -> Reference {
    reference_forward_with(model, tokens, patches, &[])
}

/// Projected attention contribution `W_O ctx + b_O` (before the residual
/// add) at `(layer, position)`.
pub struct AttentionOverride {
    pub layer: usize,
    pub position: usize,
    pub values: Vec<f64>,
}

/// [`reference_forward`] that can also overwrite projected attention
/// outputs.
pub fn reference_forward_with(
    model: &ModelBundle,
    tokens: &[u32],
    patches: &PatchSet,
    overrides: &[AttentionOverride],
) -> Reference {
    let cfg = model.config();
    let (t, h, nh, dh) = (tokens.len(), cfg.hidden_dim, cfg.num_heads, cfg.head_dim);
    let (_, word) = mat(model, "embeddings.word.weight");
    let (_, pos) = mat(model, "embeddings.position.weight");
    let e = cfg.embedding_dim;
    let emb: Vec<Vec<f64>> = (0..t)
        .map(|i| (0..e).map(|j| word[tokens[i] as usize * e + j] + pos[i * e + j]).collect())
        .collect();
    let mut x = norm(&emb, model, "embeddings.layer_norm.weight", "embeddings.layer_norm.bias", cfg.layernorm_epsilon);
    if e != h {
        x = affine(&x, model, "embeddings.projection.weight", "embeddings.projection.bias");
    }

    let mut residual_in = Vec::new();
    let mut attention_projected = Vec::new();
    for layer in 0..cfg.num_layers {
        let set = match cfg.layer_sharing {
            LayerSharing::Tied => 0,
            LayerSharing::Untied => layer,
        };
        let n = |s: &str| format!("encoder.layers.{set}.{s}");
        overwrite(&mut x, patches, layer, Component::ResidualIn, dh);
        residual_in.push(x.clone());
        let mut q = affine(&x, model, &n("attention.query.weight"), &n("attention.query.bias"));
        overwrite(&mut q, patches, layer, Component::Query, dh);
        let mut k = affine(&x, model, &n("attention.key.weight"), &n("attention.key.bias"));
        overwrite(&mut k, patches, layer, Component::Key, dh);
        let mut v = affine(&x, model, &n("attention.value.weight"), &n("attention.value.bias"));
        overwrite(&mut v, patches, layer, Component::Value, dh);

        let mut ctx = vec![vec![0.0; h]; t];
        for head in 0..nh {
            let off = head * dh;
            for i in 0..t {
                let scores: Vec<f64> = (0..t)
                    .map(|j| (0..dh).map(|d| q[i][off + d] * k[j][off + d]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for j in 0..t {
                    for d in 0..dh {
                        ctx[i][off + d] += exps[j] / z * v[j][off + d];
                    }
                }
            }
        }
        overwrite(&mut ctx, patches, layer, Component::Transformation, dh);

        let mut attn = affine(&ctx, model, &n("attention.output.weight"), &n("attention.output.bias"));
        for o in overrides.iter().filter(|o| o.layer == layer) {
            attn[o.position] = o.values.clone();
        }
        attention_projected.push(attn.clone());
        for i in 0..t {
            for j in 0..h {
                attn[i][j] += x[i][j];
            }
        }
        let hidden = norm(&attn, model, &n("attention.layer_norm.weight"), &n("attention.layer_norm.bias"), cfg.layernorm_epsilon);
        let mut inner = affine(&hidden, model, &n("ffn.intermediate.weight"), &n("ffn.intermediate.bias"));
        for row in &mut inner {
            for v in row.iter_mut() {
                *v = gelu(*v, cfg.activation);
            }
        }
        let mut out = affine(&inner, model, &n("ffn.output.weight"), &n("ffn.output.bias"));
        for i in 0..t {
            for j in 0..h {
                out[i][j] += hidden[i][j];
            }
        }
        x = norm(&out, model, &n("ffn.layer_norm.weight"), &n("ffn.layer_norm.bias"), cfg.layernorm_epsilon);
    }

    let mut d = affine(&x, model, "mlm.dense.weight", "mlm.dense.bias");
    for row in &mut d {
        for v in row.iter_mut() {
            *v = gelu(*v, cfg.activation);
        }
    }
    let d = norm(&d, model, "mlm.layer_norm.weight", "mlm.layer_norm.bias", cfg.layernorm_epsilon);
    let (_, bias) = mat(model, "mlm.bias");
    let logits = d
        .iter()
        .map(|row| {
            (0..cfg.vocab_size)
                .map(|w| bias[w] + (0..e).map(|j| word[w * e + j] * row[j]).sum::<f64>())
                .collect()
        })
        .collect();
    Reference {
        attention_projected,
        residual_in,
        logits,
    }
}

/// `log softmax(row)[token]`.
pub fn log_prob(row: &[f64], token: u32) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
    row[token as usize] - max - z.ln()
}

/// Average NP log probability with the mask span resized to the NP length.
pub fn reference_score(model: &ModelBundle, tokens: &[u32], mask: (usize, usize), np: &[u32], patches: &PatchSet) -> f64 {
    reference_score_with(model, tokens, mask, np, patches, &[])
}

pub fn resize(model: &ModelBundle, tokens: &[u32], mask: (usize, usize), count: usize) -> Vec<u32> {
    let mut resized = tokens[..mask.0].to_vec();
    resized.extend(std::iter::repeat_n(model.config().mask_token_id, count));
    resized.extend_from_slice(&tokens[mask.1..]);
    resized
}

pub fn reference_score_with(
    model: &ModelBundle,
    tokens: &[u32],
    mask: (usize, usize),
    np: &[u32],
    patches: &PatchSet,
    overrides: &[AttentionOverride],
) -> f64 {
    let resized = resize(model, tokens, mask, np.len());
    let r = reference_forward_with(model, &resized, patches, overrides);
    np.iter()
        .enumerate()
        .map(|(i, &w)| log_prob(&r.logits[mask.0 + i], w))
        .sum::<f64>()
        / np.len() as f64
}
