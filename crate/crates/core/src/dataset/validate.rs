// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;

use serde::Serialize;

use crate::dataset::pair::{Condition, Side, Span, WinogradPair};
use crate::error::{Error, Result};
use crate::TokenId;

/// A broken pair invariant. Violations are data, not faults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptySentence,
    LengthMismatch { len_a: usize, len_b: usize },
    EmptySpan { span: &'static str },
    SpanOutOfRange { span: &'static str, start: usize, end: usize, len: usize },
    OverlappingSpans { first: &'static str, second: &'static str },
    Misordered { detail: String },
    /// The sentences differ outside the context span (and verb, when allowed).
    ExtraDifferences { positions: Vec<usize> },
    /// A syntax-only pair whose context is not masked out.
    ContextNotMasked { side: Side, position: usize },
    EmptyNounPhrase { side: Side },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::EmptySentence => "empty-sentence",
            Violation::LengthMismatch { .. } => "length-mismatch",
            Violation::EmptySpan { .. } => "empty-span",
            Violation::SpanOutOfRange { .. } => "span-out-of-range",
            Violation::OverlappingSpans { .. } => "overlapping-spans",
            Violation::Misordered { .. } => "misordered",
            Violation::ExtraDifferences { .. } => "extra-differences",
            Violation::ContextNotMasked { .. } => "context-not-masked",
            Violation::EmptyNounPhrase { .. } => "empty-noun-phrase",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySentence => write!(f, "empty sentence"),
            Violation::LengthMismatch { len_a, len_b } => {
                write!(f, "sentence lengths differ ({len_a} vs {len_b})")
            }
            Violation::EmptySpan { span } => write!(f, "{span} is empty"),
            Violation::SpanOutOfRange { span, start, end, len } => {
                write!(f, "{span} [{start}, {end}) exceeds sentence length {len}")
            }
            Violation::OverlappingSpans { first, second } => write!(f, "{first} overlaps {second}"),
            Violation::Misordered { detail } => write!(f, "span order: {detail}"),
            Violation::ExtraDifferences { positions } => {
                write!(f, "sentences also differ at positions {positions:?}")
            }
            Violation::ContextNotMasked { side, position } => {
                write!(f, "context position {position} of sentence {side:?} is not masked")
            }
            Violation::EmptyNounPhrase { side } => write!(f, "answer for sentence {side:?} is empty"),
        }
    }
}

/// Labelled spans of a pair, used for range, overlap and order checks.
pub(crate) fn labelled_spans(pair: &WinogradPair) -> Vec<(&'static str, Span)> {
    let mut spans = vec![
        ("option1_span", pair.option1_span),
        ("option2_span", pair.option2_span),
        ("mask_span", pair.mask_span),
        ("context_span_a", pair.context_span_a),
        ("verb_index", Span::single(pair.verb_index)),
    ];
    if pair.context_span_b != pair.context_span_a {
        spans.push(("context_span_b", pair.context_span_b));
    }
    spans
}

/// First pair of overlapping spans, ignoring the A/B context spans which may
/// legitimately overlap each other.
pub(crate) fn first_overlap(pair: &WinogradPair) -> Option<(&'static str, &'static str)> {
    let spans = labelled_spans(pair);
    for (i, (n1, s1)) in spans.iter().enumerate() {
        for (n2, s2) in &spans[i + 1..] {
            let both_context = n1.starts_with("context") && n2.starts_with("context");
            if !both_context && s1.overlaps(s2) {
                return Some((n1, n2));
            }
        }
    }
    None
}

/// Check every invariant of `pair`; an empty list means the pair is valid.
pub fn validate_pair(pair: &WinogradPair, mask_token_id: TokenId) -> Vec<Violation> {
    let mut out = Vec::new();
    let (len_a, len_b) = (pair.tokens_a.len(), pair.tokens_b.len());
    if len_a == 0 || len_b == 0 {
        out.push(Violation::EmptySentence);
    }
    if len_a != len_b {
        out.push(Violation::LengthMismatch { len_a, len_b });
    }
    for side in [Side::A, Side::B] {
        if pair.answer(side).is_empty() {
            out.push(Violation::EmptyNounPhrase { side });
        }
    }
    let len = len_a.min(len_b);

    let mut spans_ok = true;
    for (name, span) in labelled_spans(pair) {
        if span.is_empty() {
            out.push(Violation::EmptySpan { span: name });
            spans_ok = false;
        } else if span.end > len {
            out.push(Violation::SpanOutOfRange {
                span: name,
                start: span.start,
                end: span.end,
                len,
            });
            spans_ok = false;
        }
    }
    if !spans_ok || len_a != len_b {
        return out;
    }

    if let Some((first, second)) = first_overlap(pair) {
        out.push(Violation::OverlappingSpans { first, second });
    }

    // NP1 - NP2 - mask, with context and verb after the mask.
    let order = [
        (pair.option1_span.end <= pair.option2_span.start, "option1 must precede option2"),
        (pair.option2_span.end <= pair.mask_span.start, "options must precede the mask"),
        (
            pair.mask_span.end <= pair.context_span_a.start
                && pair.mask_span.end <= pair.context_span_b.start,
            "context must follow the mask",
        ),
        (pair.mask_span.end <= pair.verb_index, "verb must follow the mask"),
    ];
    for (ok, detail) in order {
        if !ok {
            out.push(Violation::Misordered {
                detail: detail.to_string(),
            });
        }
    }

    let extra: Vec<usize> = pair
        .differing_positions()
        .into_iter()
        .filter(|&p| {
            let in_context = pair.context_span_a.contains(p) || pair.context_span_b.contains(p);
            let verb_ok = pair.condition.verb_may_differ() && p == pair.verb_index;
            !(in_context || verb_ok)
        })
        .collect();
    if !extra.is_empty() {
        out.push(Violation::ExtraDifferences { positions: extra });
    }

    if pair.condition == Condition::SyntaxOnly {
        for side in [Side::A, Side::B] {
            let tokens = pair.tokens(side);
            for position in pair.context_span(side).positions() {
                if tokens[position] != mask_token_id {
                    out.push(Violation::ContextNotMasked { side, position });
                }
            }
        }
    }
    out
}

/// Turn a context+syntax pair into its syntax-only counterpart by masking
/// the context span in both sentences. Already syntax-only pairs pass
/// through unchanged, which makes the operation idempotent.
pub fn mask_context(pair: &WinogradPair, mask_token_id: TokenId) -> Result<WinogradPair> {
    match pair.condition {
        Condition::ContextSyntax | Condition::SyntaxOnly => {}
        other => {
            return Err(Error::WrongCondition {
                pair_id: pair.pair_id.clone(),
                expected: Condition::ContextSyntax.to_string(),
                actual: other.to_string(),
            })
        }
    }
    let mut out = pair.clone();
    out.condition = Condition::SyntaxOnly;
    for (tokens, span) in [
        (&mut out.tokens_a, pair.context_span_a),
        (&mut out.tokens_b, pair.context_span_b),
    ] {
        for p in span.positions() {
            if let Some(slot) = tokens.get_mut(p) {
                *slot = mask_token_id;
            }
        }
    }
    Ok(out)
}
