// SPDX-License-Identifier: MIT OR Apache-2.0

//! Noun-phrase scoring at the mask, odds-ratio effects and zero-shot
//! metrics. All logarithms are natural.

mod bias;
mod effect;
mod metrics;

pub use bias::{embedding_bias_predict, BiasPrediction, OptionChoice, SimilarityMeasure};
pub use effect::{compute_effect, log_odds_effect, map_position, EffectContext, EffectRecord, EffectValues};
pub use metrics::{strict_metric, weak_metric};

use serde::{Deserialize, Serialize};

use crate::dataset::{Side, Span, WinogradPair};
use crate::error::{Error, Result};
use crate::model::{forward, Logits, ModelBundle};
use crate::patch::PatchSet;
use crate::TokenId;

/// Average per-token log probabilities of both answers under both sentences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    /// `log P(N_A | s_A)`
    pub logp_na_sa: f64,
    /// `log P(N_B | s_A)`
    pub logp_nb_sa: f64,
    /// `log P(N_A | s_B)`
    pub logp_na_sb: f64,
    /// `log P(N_B | s_B)`
    pub logp_nb_sb: f64,
}

impl PairScores {
    /// `log P(answer(answer) | sentence)`.
    pub fn get(&self, sentence: Side, answer: Side) -> f64 {
        match (sentence, answer) {
            (Side::A, Side::A) => self.logp_na_sa,
            (Side::A, Side::B) => self.logp_nb_sa,
            (Side::B, Side::A) => self.logp_na_sb,
            (Side::B, Side::B) => self.logp_nb_sb,
        }
    }
}

/// Replace `mask_span` with `count` mask tokens.
pub fn resize_mask(tokens: &[TokenId], mask_span: Span, count: usize, mask_token_id: TokenId) -> Result<Vec<TokenId>> {
    if mask_span.is_empty() || mask_span.end > tokens.len() {
        return Err(Error::MaskSpanOutOfRange {
            start: mask_span.start,
            end: mask_span.end,
            len: tokens.len(),
        });
    }
    let mut out = Vec::with_capacity(tokens.len() - mask_span.len() + count);
    out.extend_from_slice(&tokens[..mask_span.start]);
    out.extend(std::iter::repeat_n(mask_token_id, count));
    out.extend_from_slice(&tokens[mask_span.end..]);
    Ok(out)
}

/// Mean of `log P(position start+i = np[i])` over the NP tokens, read from
/// logits of a sentence whose mask span already holds `np.len()` masks.
pub fn score_from_logits(logits: &Logits, mask_start: usize, np_tokens: &[TokenId]) -> f64 {
    let total: f64 = np_tokens
        .iter()
        .enumerate()
        .map(|(i, &tok)| logits.log_prob(mask_start + i, tok))
        .sum();
    total / np_tokens.len() as f64
}

/// Score `np_tokens` at the pronoun site of `tokens`.
///
/// The mask span is resized to `np_tokens.len()` masks; token `i` of the NP
/// is predicted at the `i`-th mask while the other NP positions stay masked.
/// `patches` address the resized sentence.
pub fn score_np(
    model: &ModelBundle,
    tokens: &[TokenId],
    mask_span: Span,
    np_tokens: &[TokenId],
    patches: &PatchSet,
) -> Result<f64> {
    if np_tokens.is_empty() {
        return Err(Error::EmptyNounPhrase);
    }
    let resized = resize_mask(tokens, mask_span, np_tokens.len(), model.config().mask_token_id)?;
    let trace = forward(model, &resized, patches)?;
    let score = score_from_logits(trace.logits(), mask_span.start, np_tokens);
    if !score.is_finite() {
        return Err(Error::NonFiniteScore(format!("log P(np) = {score}")));
    }
    Ok(score)
}

/// Unpatched scores of both answers under both sentences.
pub fn score_pair(model: &ModelBundle, pair: &WinogradPair) -> Result<PairScores> {
    let empty = PatchSet::new();
    let s = |sentence: Side, answer: Side| {
        score_np(model, pair.tokens(sentence), pair.mask_span, pair.answer(answer), &empty)
    };
    Ok(PairScores {
        logp_na_sa: s(Side::A, Side::A)?,
        logp_nb_sa: s(Side::A, Side::B)?,
        logp_na_sb: s(Side::B, Side::A)?,
        logp_nb_sb: s(Side::B, Side::B)?,
    })
}
