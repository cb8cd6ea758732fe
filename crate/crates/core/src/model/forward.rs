// SPDX-License-Identifier: MIT OR Apache-2.0

//! Patchable encoder forward pass.
//!
//! Every patch replaces a value immediately after it is computed and before
//! anything downstream reads it: `residual_in` before the layer's attention,
//! `query`/`key`/`value` before the attention scores, `transformation`
//! before the output projection. Everything downstream, layer norms
//! included, is recomputed from the patched value.

use crate::error::{Error, Result};
use crate::model::bundle::ModelBundle;
use crate::model::config::names;
use crate::model::kernels::{activate, layer_norm, linear, log_softmax};
use crate::patch::{Component, PatchSet};
use crate::TokenId;

/// Intermediate values of one encoder layer; every `[T, hidden]` buffer is
/// row-major with head `h` occupying columns `h*head_dim..(h+1)*head_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub residual_in: Vec<f32>,
    pub query: Vec<f32>,
    pub key: Vec<f32>,
    pub value: Vec<f32>,
    /// `[heads, T, T]`: row `t` of head `h` is how query `t` distributes its
    /// attention over keys.
    pub attention: Vec<f32>,
    pub transformation: Vec<f32>,
    /// `residual_in + W_o * transformation + b_o`, before the layer norm.
    pub attention_output: Vec<f32>,
    pub residual_out: Vec<f32>,
}

/// Output logits, `[T, vocab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    data: Vec<f32>,
    vocab_size: usize,
}

impl Logits {
    pub fn row(&self, position: usize) -> &[f32] {
        &self.data[position * self.vocab_size..(position + 1) * self.vocab_size]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn seq_len(&self) -> usize {
        self.data.len() / self.vocab_size
    }

    pub fn log_probs(&self, position: usize) -> Vec<f64> {
        log_softmax(self.row(position))
    }

    /// `log P(token at position)` under the MLM head.
    pub fn log_prob(&self, position: usize, token: TokenId) -> f64 {
        self.log_probs(position)[token as usize]
    }
}

/// Every intermediate value of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    tokens: Vec<TokenId>,
    hidden_dim: usize,
    head_dim: usize,
    num_heads: usize,
    layers: Vec<LayerTrace>,
    logits: Logits,
    applied_patches: usize,
}

impl ForwardTrace {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &LayerTrace {
        &self.layers[layer]
    }

    pub fn logits(&self) -> &Logits {
        &self.logits
    }

    /// Number of patch entries that were applied while producing this trace.
    pub fn applied_patches(&self) -> usize {
        self.applied_patches
    }

    fn row<'a>(&self, buf: &'a [f32], position: usize) -> &'a [f32] {
        &buf[position * self.hidden_dim..(position + 1) * self.hidden_dim]
    }

    fn head_slice<'a>(&self, buf: &'a [f32], head: usize, position: usize) -> &'a [f32] {
        let start = position * self.hidden_dim + head * self.head_dim;
        &buf[start..start + self.head_dim]
    }

    pub fn residual_in(&self, layer: usize, position: usize) -> &[f32] {
        self.row(&self.layers[layer].residual_in, position)
    }

    pub fn residual_out(&self, layer: usize, position: usize) -> &[f32] {
        self.row(&self.layers[layer].residual_out, position)
    }

    pub fn query(&self, layer: usize, head: usize, position: usize) -> &[f32] {
        self.head_slice(&self.layers[layer].query, head, position)
    }

    pub fn key(&self, layer: usize, head: usize, position: usize) -> &[f32] {
        self.head_slice(&self.layers[layer].key, head, position)
    }

    pub fn value(&self, layer: usize, head: usize, position: usize) -> &[f32] {
        self.head_slice(&self.layers[layer].value, head, position)
    }

    pub fn transformation(&self, layer: usize, head: usize, position: usize) -> &[f32] {
        self.head_slice(&self.layers[layer].transformation, head, position)
    }

    /// Attention distribution of query `position` in `head`.
    pub fn attention_row(&self, layer: usize, head: usize, position: usize) -> &[f32] {
        let t = self.seq_len();
        let start = (head * t + position) * t;
        &self.layers[layer].attention[start..start + t]
    }

    pub fn attention_output(&self, layer: usize, position: usize) -> &[f32] {
        self.row(&self.layers[layer].attention_output, position)
    }

    /// The recorded vector at `site`, ready to be used as a patch elsewhere.
    pub fn site_value(&self, site: &crate::patch::ActivationSite) -> Vec<f32> {
        let layer = &self.layers[site.layer];
        let buf = match site.component {
            Component::ResidualIn => &layer.residual_in,
            Component::Query => &layer.query,
            Component::Key => &layer.key,
            Component::Value => &layer.value,
            Component::Transformation => &layer.transformation,
        };
        match site.head {
            Some(crate::patch::Head::Index(h)) => self.head_slice(buf, h, site.position).to_vec(),
            _ => self.row(buf, site.position).to_vec(),
        }
    }
}

/// Logits of a patched pass that did not record intermediate values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedOutput {
    pub logits: Logits,
    pub applied_patches: usize,
}

/// Run the model on `tokens` with `patches` applied and record everything.
pub fn forward(model: &ModelBundle, tokens: &[TokenId], patches: &PatchSet) -> Result<ForwardTrace> {
    let run = Runner::new(model, tokens, patches)?.execute(None, true)?;
    Ok(run.into_trace(model, tokens))
}

/// Patched pass that reuses the layers of an unpatched `base` trace below the
/// first patched layer. Bit-identical to [`forward`] on the same tokens.
pub fn forward_from(model: &ModelBundle, base: &ForwardTrace, patches: &PatchSet) -> Result<ForwardTrace> {
    let run = Runner::new(model, base.tokens(), patches)?.execute(Some(base), true)?;
    Ok(run.into_trace(model, base.tokens()))
}

/// Like [`forward_from`] but only keeps the logits.
pub fn patched_logits(model: &ModelBundle, base: &ForwardTrace, patches: &PatchSet) -> Result<PatchedOutput> {
    let run = Runner::new(model, base.tokens(), patches)?.execute(Some(base), false)?;
    Ok(PatchedOutput {
        logits: Logits {
            data: run.logits,
            vocab_size: model.config().vocab_size,
        },
        applied_patches: run.applied,
    })
}

/// One patch, resolved to a buffer location.
struct Placed<'p> {
    layer: usize,
    component: Component,
    offset: usize,
    values: &'p [f32],
}

struct Runner<'a> {
    model: &'a ModelBundle,
    tokens: &'a [TokenId],
    patches: Vec<Placed<'a>>,
}

struct RunOutput {
    layers: Vec<LayerTrace>,
    logits: Vec<f32>,
    applied: usize,
}

impl RunOutput {
    fn into_trace(self, model: &ModelBundle, tokens: &[TokenId]) -> ForwardTrace {
        let cfg = model.config();
        ForwardTrace {
            tokens: tokens.to_vec(),
            hidden_dim: cfg.hidden_dim,
            head_dim: cfg.head_dim,
            num_heads: cfg.num_heads,
            layers: self.layers,
            logits: Logits {
                data: self.logits,
                vocab_size: cfg.vocab_size,
            },
            applied_patches: self.applied,
        }
    }
}

impl<'a> Runner<'a> {
    fn new(model: &'a ModelBundle, tokens: &'a [TokenId], patches: &'a PatchSet) -> Result<Self> {
        let cfg = model.config();
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if tokens.len() > cfg.max_positions {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: cfg.max_positions,
            });
        }
        if let Some((position, &token)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= cfg.vocab_size)
        {
            return Err(Error::TokenOutOfRange { position, token });
        }
        patches.check(cfg, tokens.len())?;
        let placed = patches
            .iter()
            .map(|p| Placed {
                layer: p.site.layer,
                component: p.site.component,
                offset: p.site.position * cfg.hidden_dim + p.site.column(cfg),
                values: &p.values,
            })
            .collect();
        Ok(Self {
            model,
            tokens,
            patches: placed,
        })
    }

    fn apply(&self, layer: usize, component: Component, buf: &mut [f32]) -> usize {
        let mut applied = 0;
        for p in self
            .patches
            .iter()
            .filter(|p| p.layer == layer && p.component == component)
        {
            buf[p.offset..p.offset + p.values.len()].copy_from_slice(p.values);
            applied += 1;
        }
        applied
    }

    fn execute(self, base: Option<&ForwardTrace>, record: bool) -> Result<RunOutput> {
        let model = self.model;
        let cfg = model.config();
        let t = self.tokens.len();
        let h = cfg.hidden_dim;

        let start = match base {
            Some(base) => {
                if base.applied_patches != 0 {
                    return Err(Error::PatchedBase);
                }
                self.patches
                    .iter()
                    .map(|p| p.layer)
                    .min()
                    .unwrap_or(cfg.num_layers)
            }
            None => 0,
        };

        let mut layers = Vec::with_capacity(if record { cfg.num_layers } else { 0 });
        let mut x = match base {
            Some(base) if start == cfg.num_layers => {
                // nothing to patch: the base pass is the answer
                if record {
                    layers.extend_from_slice(&base.layers);
                }
                return Ok(RunOutput {
                    layers,
                    logits: base.logits.data.clone(),
                    applied: 0,
                });
            }
            Some(base) => {
                if record {
                    layers.extend_from_slice(&base.layers[..start]);
                }
                base.layers[start].residual_in.clone()
            }
            None => self.embed()?,
        };

        let mut applied = 0;
        for layer in start..cfg.num_layers {
            let set = cfg.parameter_set(layer);
            let w = |suffix: &str| model.expect(&names::layer(set, suffix));

            applied += self.apply(layer, Component::ResidualIn, &mut x);
            check_finite(&x, h, "residual_in", layer)?;

            let mut query = linear(&x, t, w(names::QUERY_WEIGHT), w(names::QUERY_BIAS).data());
            applied += self.apply(layer, Component::Query, &mut query);
            let mut key = linear(&x, t, w(names::KEY_WEIGHT), w(names::KEY_BIAS).data());
            applied += self.apply(layer, Component::Key, &mut key);
            let mut value = linear(&x, t, w(names::VALUE_WEIGHT), w(names::VALUE_BIAS).data());
            applied += self.apply(layer, Component::Value, &mut value);
            check_finite(&query, h, "query", layer)?;
            check_finite(&key, h, "key", layer)?;
            check_finite(&value, h, "value", layer)?;

            let (attention, mut transformation) = attend(&query, &key, &value, t, cfg.num_heads, cfg.head_dim);
            applied += self.apply(layer, Component::Transformation, &mut transformation);
            check_finite(&transformation, h, "transformation", layer)?;

            let mut attention_output = linear(
                &transformation,
                t,
                w(names::OUTPUT_WEIGHT),
                w(names::OUTPUT_BIAS).data(),
            );
            for (o, r) in attention_output.iter_mut().zip(&x) {
                *o += r;
            }
            let mut hidden = attention_output.clone();
            layer_norm(
                &mut hidden,
                h,
                w(names::ATTENTION_NORM_WEIGHT).data(),
                w(names::ATTENTION_NORM_BIAS).data(),
                cfg.layernorm_epsilon,
            );

            let mut inner = linear(&hidden, t, w(names::FFN_IN_WEIGHT), w(names::FFN_IN_BIAS).data());
            activate(&mut inner, cfg.activation);
            let ffn = linear(&inner, t, w(names::FFN_OUT_WEIGHT), w(names::FFN_OUT_BIAS).data());
            let mut out: Vec<f32> = hidden.iter().zip(&ffn).map(|(a, b)| a + b).collect();
            layer_norm(
                &mut out,
                h,
                w(names::FFN_NORM_WEIGHT).data(),
                w(names::FFN_NORM_BIAS).data(),
                cfg.layernorm_epsilon,
            );
            check_finite(&out, h, "residual_out", layer)?;

            let residual_in = std::mem::replace(&mut x, out);
            if record {
                layers.push(LayerTrace {
                    residual_in,
                    query,
                    key,
                    value,
                    attention,
                    transformation,
                    attention_output,
                    residual_out: x.clone(),
                });
            }
        }

        let logits = self.head(&x)?;
        Ok(RunOutput {
            layers,
            logits,
            applied,
        })
    }

    fn embed(&self) -> Result<Vec<f32>> {
        let model = self.model;
        let cfg = model.config();
        let e = cfg.embedding_dim;
        let word = model.expect(names::WORD_EMBEDDINGS);
        let position = model.expect(names::POSITION_EMBEDDINGS);
        let mut emb = Vec::with_capacity(self.tokens.len() * e);
        for (t, &token) in self.tokens.iter().enumerate() {
            emb.extend(
                word.row(token as usize)
                    .iter()
                    .zip(position.row(t))
                    .map(|(a, b)| a + b),
            );
        }
        layer_norm(
            &mut emb,
            e,
            model.expect(names::EMBEDDING_NORM_WEIGHT).data(),
            model.expect(names::EMBEDDING_NORM_BIAS).data(),
            cfg.layernorm_epsilon,
        );
        let x = if cfg.has_embedding_projection() {
            linear(
                &emb,
                self.tokens.len(),
                model.expect(names::EMBEDDING_PROJECTION_WEIGHT),
                model.expect(names::EMBEDDING_PROJECTION_BIAS).data(),
            )
        } else {
            emb
        };
        Ok(x)
    }

    fn head(&self, x: &[f32]) -> Result<Vec<f32>> {
        let model = self.model;
        let cfg = model.config();
        let t = self.tokens.len();
        let mut m = linear(
            x,
            t,
            model.expect(names::MLM_DENSE_WEIGHT),
            model.expect(names::MLM_DENSE_BIAS).data(),
        );
        activate(&mut m, cfg.activation);
        layer_norm(
            &mut m,
            cfg.embedding_dim,
            model.expect(names::MLM_NORM_WEIGHT).data(),
            model.expect(names::MLM_NORM_BIAS).data(),
            cfg.layernorm_epsilon,
        );
        let logits = linear(
            &m,
            t,
            model.expect(names::WORD_EMBEDDINGS),
            model.expect(names::MLM_OUTPUT_BIAS).data(),
        );
        check_finite(&logits, cfg.vocab_size, "logits", cfg.num_layers)?;
        Ok(logits)
    }
}

/// Scaled dot-product attention per head. Scores, softmax and the weighted
/// value sums accumulate in `f64`.
fn attend(
    query: &[f32],
    key: &[f32],
    value: &[f32],
    t: usize,
    heads: usize,
    head_dim: usize,
) -> (Vec<f32>, Vec<f32>) {
    let hidden = heads * head_dim;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut attention = vec![0f32; heads * t * t];
    let mut context = vec![0f32; t * hidden];
    let mut scores = vec![0f64; t];
    let mut acc = vec![0f64; head_dim];
    for h in 0..heads {
        let col = h * head_dim;
        for i in 0..t {
            let q = &query[i * hidden + col..i * hidden + col + head_dim];
            for (j, s) in scores.iter_mut().enumerate() {
                let k = &key[j * hidden + col..j * hidden + col + head_dim];
                *s = q
                    .iter()
                    .zip(k)
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum::<f64>()
                    * scale;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                z += *s;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            let row = &mut attention[(h * t + i) * t..(h * t + i + 1) * t];
            for (j, (s, a)) in scores.iter().zip(row.iter_mut()).enumerate() {
                let weight = s / z;
                *a = weight as f32;
                let v = &value[j * hidden + col..j * hidden + col + head_dim];
                for (dst, src) in acc.iter_mut().zip(v) {
                    *dst += weight * f64::from(*src);
                }
            }
            for (dst, src) in context[i * hidden + col..i * hidden + col + head_dim]
                .iter_mut()
                .zip(&acc)
            {
                *dst = *src as f32;
            }
        }
    }
    (attention, context)
}

fn check_finite(buf: &[f32], width: usize, stage: &'static str, layer: usize) -> Result<()> {
    match buf.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::NonFinite {
            stage,
            layer,
            position: idx / width,
        }),
        None => Ok(()),
    }
}
