// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexical-shortcut check on uncontextualized word embeddings.
//!
//! The context embedding of each sentence is compared with the embeddings of
//! the two option spans; the more similar option is the prediction. Spans
//! longer than one token use the mean of their token embeddings.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Side, Span, WinogradPair};
use crate::error::{Error, Result};
use crate::model::{names, ModelBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    /// Pearson correlation; larger wins.
    Correlation,
    /// Euclidean distance; smaller wins.
    Euclidean,
}

impl FromStr for SimilarityMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(Self::Correlation),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionChoice {
    Option1,
    Option2,
    Tie,
}

impl OptionChoice {
    pub fn flip(self) -> Self {
        match self {
            OptionChoice::Option1 => OptionChoice::Option2,
            OptionChoice::Option2 => OptionChoice::Option1,
            OptionChoice::Tie => OptionChoice::Tie,
        }
    }
}

/// Embedding-similarity predictions for both sentences of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPrediction {
    pub sentence_a: OptionChoice,
    pub sentence_b: OptionChoice,
    /// Option span holding `N_A`.
    pub correct_a: OptionChoice,
    /// Both sentences predicted their own correct option.
    pub pair_correct: bool,
    /// Some span had more than one token and was averaged.
    pub averaged_spans: bool,
}

/// Predict each sentence's referent from layer-0 word embeddings.
pub fn embedding_bias_predict(
    model: &ModelBundle,
    pair: &WinogradPair,
    measure: SimilarityMeasure,
) -> Result<BiasPrediction> {
    let correct_a = correct_option(pair)?;
    let embeddings = model
        .tensor(names::WORD_EMBEDDINGS)
        .ok_or_else(|| Error::MissingTensor(names::WORD_EMBEDDINGS.into()))?;
    let mean = |tokens: &[crate::TokenId], span: Span| -> Vec<f64> {
        let width = embeddings.shape()[1];
        let mut acc = vec![0f64; width];
        for &tok in &tokens[span.positions()] {
            for (a, v) in acc.iter_mut().zip(embeddings.row(tok as usize)) {
                *a += f64::from(*v);
            }
        }
        acc.iter_mut().for_each(|a| *a /= span.len() as f64);
        acc
    };

    let predict = |side: Side| -> Result<OptionChoice> {
        let tokens = pair.tokens(side);
        let context = mean(tokens, pair.context_span(side));
        let opt1 = mean(tokens, pair.option1_span);
        let opt2 = mean(tokens, pair.option2_span);
        let (s1, s2) = match measure {
            SimilarityMeasure::Correlation => (correlation(&context, &opt1)?, correlation(&context, &opt2)?),
            // negate so that larger is always more similar
            SimilarityMeasure::Euclidean => (-euclidean(&context, &opt1), -euclidean(&context, &opt2)),
        };
        Ok(if s1 > s2 {
            OptionChoice::Option1
        } else if s2 > s1 {
            OptionChoice::Option2
        } else {
            OptionChoice::Tie
        })
    };
    let sentence_a = predict(Side::A)?;
    let sentence_b = predict(Side::B)?;
    let averaged_spans = [
        pair.option1_span,
        pair.option2_span,
        pair.context_span_a,
        pair.context_span_b,
    ]
    .iter()
    .any(|s| s.len() > 1);
    Ok(BiasPrediction {
        sentence_a,
        sentence_b,
        correct_a,
        pair_correct: sentence_a == correct_a && sentence_b == correct_a.flip(),
        averaged_spans,
    })
}

/// Which option span holds `N_A`: an exact token match wins, otherwise the
/// span sharing more tokens with `N_A` than with `N_B`.
fn correct_option(pair: &WinogradPair) -> Result<OptionChoice> {
    let span_tokens = |span: Span| &pair.tokens_a[span.positions()];
    let (t1, t2) = (span_tokens(pair.option1_span), span_tokens(pair.option2_span));
    let (na, nb) = (pair.np_a_tokens.as_slice(), pair.np_b_tokens.as_slice());
    if t1 == na && t2 != na {
        return Ok(OptionChoice::Option1);
    }
    if t2 == na && t1 != na {
        return Ok(OptionChoice::Option2);
    }
    let shared = |span: &[crate::TokenId], np: &[crate::TokenId]| span.iter().filter(|t| np.contains(t)).count() as i64;
    let score1 = shared(t1, na) - shared(t1, nb);
    let score2 = shared(t2, na) - shared(t2, nb);
    match score1.cmp(&score2) {
        std::cmp::Ordering::Greater => Ok(OptionChoice::Option1),
        std::cmp::Ordering::Less => Ok(OptionChoice::Option2),
        std::cmp::Ordering::Equal => Err(Error::UnresolvedOption(pair.pair_id.clone())),
    }
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("embedding vector is constant".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
