// SPDX-License-Identifier: MIT OR Apache-2.0

//! Odds-ratio effects of interchange interventions.
//!
//! For a pair `(s_A, s_B)` the baseline preference under `s_A` is
//! `y_pre = P(N_A|s_A) / P(N_B|s_A)`. Interchanging a site of `s_A` with the
//! value recorded at the same site of `s_B` gives `y_post`, and the
//! direction's log effect is `log y_pre - log y_post`. The reverse direction
//! runs `s_B` with values from `s_A` and `N_B` as the correct answer. The
//! reported effect is the mean of the two.
//!
//! Multi-token answers are scored with the pronoun resized to one mask per
//! answer token, so each answer gets its own pair of resized sentences.
//! Sites are given in original sentence coordinates and mapped with
//! [`map_position`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Side, Span, WinogradPair};
use crate::error::{Error, Result};
use crate::model::{forward, patched_logits, ForwardTrace, Logits, ModelBundle};
use crate::patch::{ActivationSite, PatchSet};
use crate::scoring::{resize_mask, score_from_logits, PairScores};

/// Effect of one interchange, both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub site: ActivationSite,
    /// `P(N_A|s_A) / P(N_B|s_A)` before the intervention.
    pub y_pre: f64,
    /// The same ratio with the site of `s_A` interchanged from `s_B`.
    pub y_post: f64,
    /// `P(N_B|s_B) / P(N_A|s_B)` before the intervention.
    pub y_pre_ba: f64,
    /// The same ratio with the site of `s_B` interchanged from `s_A`.
    pub y_post_ba: f64,
    /// `log y_pre - log y_post`, evaluated on `s_A`.
    pub log_effect_dir_ab: f64,
    /// `log y_pre_ba - log y_post_ba`, evaluated on `s_B`.
    pub log_effect_dir_ba: f64,
    /// Mean of the two directions.
    pub log_effect: f64,
}

/// Log preference ratios for both directions of one intervention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectValues {
    pub log_y_pre_ab: f64,
    pub log_y_post_ab: f64,
    pub log_y_pre_ba: f64,
    pub log_y_post_ba: f64,
}

impl EffectValues {
    pub fn dir_ab(&self) -> f64 {
        self.log_y_pre_ab - self.log_y_post_ab
    }

    pub fn dir_ba(&self) -> f64 {
        self.log_y_pre_ba - self.log_y_post_ba
    }

    pub fn mean(&self) -> f64 {
        (self.dir_ab() + self.dir_ba()) / 2.0
    }

    pub fn into_record(self, site: ActivationSite) -> EffectRecord {
        EffectRecord {
            site,
            y_pre: self.log_y_pre_ab.exp(),
            y_post: self.log_y_post_ab.exp(),
            y_pre_ba: self.log_y_pre_ba.exp(),
            y_post_ba: self.log_y_post_ba.exp(),
            log_effect_dir_ab: self.dir_ab(),
            log_effect_dir_ba: self.dir_ba(),
            log_effect: self.mean(),
        }
    }
}

/// `log(y_pre / y_post)` from log probabilities of the correct and incorrect
/// answers before and after an intervention.
pub fn log_odds_effect(pre: (f64, f64), post: (f64, f64)) -> f64 {
    (pre.0 - pre.1) - (post.0 - post.1)
}

/// Positions in a sentence whose `mask_span` was resized to `count` masks
/// that correspond to original position `position`.
///
/// Positions before the span are unchanged, positions after it shift by the
/// length difference. A position inside the span maps to itself when the
/// length is unchanged and to every resized mask otherwise.
pub fn map_position(position: usize, mask_span: Span, count: usize) -> Vec<usize> {
    if position < mask_span.start {
        vec![position]
    } else if position >= mask_span.end {
        vec![position - mask_span.len() + count]
    } else if mask_span.len() == count {
        vec![position]
    } else {
        (mask_span.start..mask_span.start + count).collect()
    }
}

/// Unpatched traces of a pair, ready for repeated interchanges.
///
/// One trace is kept per `(sentence, answer length)`; both sentences of a
/// pair are resized identically, so sites line up across them.
pub struct EffectContext<'a> {
    model: &'a ModelBundle,
    pair: &'a WinogradPair,
    traces: BTreeMap<(Side, usize), Arc<ForwardTrace>>,
    baseline: PairScores,
}

impl<'a> EffectContext<'a> {
    pub fn new(model: &'a ModelBundle, pair: &'a WinogradPair) -> Result<Self> {
        Self::with_traces(model, pair, |_, tokens| forward(model, tokens, &PatchSet::new()).map(Arc::new))
    }

    /// Build the context, obtaining each unpatched trace from `trace_for`
    /// (which may serve it from a cache).
    pub fn with_traces<F>(model: &'a ModelBundle, pair: &'a WinogradPair, mut trace_for: F) -> Result<Self>
    where
        F: FnMut(Side, &[crate::TokenId]) -> Result<Arc<ForwardTrace>>,
    {
        if pair.tokens_a.len() != pair.tokens_b.len() {
            return Err(Error::InvalidPair {
                pair_id: pair.pair_id.clone(),
                violations: vec!["sentence lengths differ".into()],
            });
        }
        let mask = model.config().mask_token_id;
        let mut traces = BTreeMap::new();
        for answer in [Side::A, Side::B] {
            let count = pair.answer(answer).len();
            if count == 0 {
                return Err(Error::EmptyNounPhrase);
            }
            for sentence in [Side::A, Side::B] {
                if traces.contains_key(&(sentence, count)) {
                    continue;
                }
                let tokens = resize_mask(pair.tokens(sentence), pair.mask_span, count, mask)?;
                traces.insert((sentence, count), trace_for(sentence, &tokens)?);
            }
        }
        let mut ctx = Self {
            model,
            pair,
            traces,
            baseline: PairScores {
                logp_na_sa: 0.0,
                logp_nb_sa: 0.0,
                logp_na_sb: 0.0,
                logp_nb_sb: 0.0,
            },
        };
        let s = |sentence, answer| ctx.base_score(sentence, answer);
        let baseline = PairScores {
            logp_na_sa: s(Side::A, Side::A)?,
            logp_nb_sa: s(Side::A, Side::B)?,
            logp_na_sb: s(Side::B, Side::A)?,
            logp_nb_sb: s(Side::B, Side::B)?,
        };
        ctx.baseline = baseline;
        Ok(ctx)
    }

    pub fn pair(&self) -> &WinogradPair {
        self.pair
    }

    /// Unpatched scores.
    pub fn baseline(&self) -> PairScores {
        self.baseline
    }

    /// Unpatched trace of `sentence` with the mask resized for `answer`.
    pub fn trace(&self, sentence: Side, answer: Side) -> &ForwardTrace {
        &self.traces[&(sentence, self.pair.answer(answer).len())]
    }

    fn base_score(&self, sentence: Side, answer: Side) -> Result<f64> {
        let score = score_from_logits(
            self.trace(sentence, answer).logits(),
            self.pair.mask_span.start,
            self.pair.answer(answer),
        );
        finite(score, sentence, answer)
    }

    /// Score of `answer` on `target` after interchanging `sites` with the
    /// values recorded on the other sentence.
    pub fn patched_score(&self, target: Side, answer: Side, sites: &[ActivationSite]) -> Result<f64> {
        let logits = self.patched_run(target, self.pair.answer(answer).len(), sites)?;
        self.read_score(&logits, target, answer)
    }

    /// Logits of `target` resized to `count` masks, with `sites` interchanged.
    fn patched_run(&self, target: Side, count: usize, sites: &[ActivationSite]) -> Result<Logits> {
        let base = &self.traces[&(target, count)];
        let source = &self.traces[&(target.other(), count)];
        let mut patches = PatchSet::new();
        for site in sites {
            site.check(self.model.config(), self.pair.len())?;
            for position in map_position(site.position, self.pair.mask_span, count) {
                let mapped = site.at(position);
                patches.push(mapped, source.site_value(&mapped));
            }
        }
        let out = patched_logits(self.model, base, &patches)?;
        assert_eq!(
            out.applied_patches,
            patches.len(),
            "forward pass dropped patch entries"
        );
        Ok(out.logits)
    }

    fn read_score(&self, logits: &Logits, target: Side, answer: Side) -> Result<f64> {
        let score = score_from_logits(logits, self.pair.mask_span.start, self.pair.answer(answer));
        finite(score, target, answer)
    }

    /// Both directions of interchanging `sites` jointly.
    pub fn effect(&self, sites: &[ActivationSite]) -> Result<EffectValues> {
        let direction = |target: Side| -> Result<(f64, f64)> {
            let (correct, wrong) = (target, target.other());
            let pre = self.baseline.get(target, correct) - self.baseline.get(target, wrong);
            let (m_correct, m_wrong) = (self.pair.answer(correct).len(), self.pair.answer(wrong).len());
            let logits = self.patched_run(target, m_correct, sites)?;
            let post_correct = self.read_score(&logits, target, correct)?;
            // equal-length answers share the resized sentence and hence the pass
            let post_wrong = if m_wrong == m_correct {
                self.read_score(&logits, target, wrong)?
            } else {
                self.patched_score(target, wrong, sites)?
            };
            Ok((pre, post_correct - post_wrong))
        };
        let (log_y_pre_ab, log_y_post_ab) = direction(Side::A)?;
        let (log_y_pre_ba, log_y_post_ba) = direction(Side::B)?;
        let values = EffectValues {
            log_y_pre_ab,
            log_y_post_ab,
            log_y_pre_ba,
            log_y_post_ba,
        };
        if !values.mean().is_finite() {
            return Err(Error::NonFiniteScore(format!(
                "log effect at {:?} is not finite",
                sites.first()
            )));
        }
        Ok(values)
    }

    /// Effect record for a single site.
    pub fn record(&self, site: ActivationSite) -> Result<EffectRecord> {
        Ok(self.effect(&[site])?.into_record(site))
    }
}

fn finite(score: f64, sentence: Side, answer: Side) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::NonFiniteScore(format!(
            "log P(N_{answer:?} | s_{sentence:?}) = {score}"
        )))
    }
}

/// Interchange one site of `pair` in both directions.
pub fn compute_effect(model: &ModelBundle, pair: &WinogradPair, site: &ActivationSite) -> Result<EffectRecord> {
    EffectContext::new(model, pair)?.record(*site)
}
