// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TokenId;

/// Half-open token index range, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn single(index: usize) -> Self {
        Self::new(index, index + 1)
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Which cue distinguishes the two sentences of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Only the context word differs.
    Context,
    /// Context word and verb number differ.
    ContextSyntax,
    /// Context masked out; only verb number differs.
    SyntaxOnly,
    /// Control: the context word is swapped for a synonym.
    Synonym,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Context,
        Condition::ContextSyntax,
        Condition::SyntaxOnly,
        Condition::Synonym,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Context => "context",
            Condition::ContextSyntax => "context_syntax",
            Condition::SyntaxOnly => "syntax_only",
            Condition::Synonym => "synonym",
        }
    }

    /// Whether the verb may differ between the two sentences.
    pub fn verb_may_differ(self) -> bool {
        matches!(self, Condition::ContextSyntax | Condition::SyntaxOnly)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition `{s}`")))
    }
}

/// Where a pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SuperglueWsc,
    Winogrande,
    Constructed,
}

/// One of the two sentences of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// A pre-tokenized Winograd pair.
///
/// `np_a_tokens` is the correct answer for `tokens_a` and `np_b_tokens` the
/// correct answer for `tokens_b`; both are scored at `mask_span`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinogradPair {
    pub pair_id: String,
    pub condition: Condition,
    #[serde(rename = "tokens_A")]
    pub tokens_a: Vec<TokenId>,
    #[serde(rename = "tokens_B")]
    pub tokens_b: Vec<TokenId>,
    #[serde(rename = "context_span_A")]
    pub context_span_a: Span,
    #[serde(rename = "context_span_B")]
    pub context_span_b: Span,
    pub option1_span: Span,
    pub option2_span: Span,
    pub mask_span: Span,
    pub verb_index: usize,
    #[serde(rename = "np_A_tokens")]
    pub np_a_tokens: Vec<TokenId>,
    #[serde(rename = "np_B_tokens")]
    pub np_b_tokens: Vec<TokenId>,
    pub source: Source,
}

impl WinogradPair {
    pub fn tokens(&self, side: Side) -> &[TokenId] {
        match side {
            Side::A => &self.tokens_a,
            Side::B => &self.tokens_b,
        }
    }

    pub fn context_span(&self, side: Side) -> Span {
        match side {
            Side::A => self.context_span_a,
            Side::B => self.context_span_b,
        }
    }

    /// The noun phrase that is correct for `side`.
    pub fn answer(&self, side: Side) -> &[TokenId] {
        match side {
            Side::A => &self.np_a_tokens,
            Side::B => &self.np_b_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens_a.is_empty()
    }

    /// Positions where the two sentences hold different tokens.
    pub fn differing_positions(&self) -> Vec<usize> {
        self.tokens_a
            .iter()
            .zip(&self.tokens_b)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Positions in either sentence's context span.
    pub fn context_positions(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .context_span_a
            .positions()
            .chain(self.context_span_b.positions())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
