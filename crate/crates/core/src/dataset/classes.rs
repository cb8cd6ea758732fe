// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-class annotation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::pair::WinogradPair;
use crate::dataset::validate::first_overlap;
use crate::error::{Error, Result};
use crate::TokenId;

/// Role of a token position within a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Context,
    Options,
    Mask,
    Verb,
    Rest,
    /// Boundary tokens and final punctuation left out of class aggregates.
    Excluded,
}

impl TokenClass {
    /// Classes that receive aggregate cells, in reporting order.
    pub const AGGREGATED: [TokenClass; 5] = [
        TokenClass::Context,
        TokenClass::Options,
        TokenClass::Mask,
        TokenClass::Verb,
        TokenClass::Rest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Context => "context",
            TokenClass::Options => "options",
            TokenClass::Mask => "mask",
            TokenClass::Verb => "verb",
            TokenClass::Rest => "rest",
            TokenClass::Excluded => "excluded",
        }
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TokenClass::AGGREGATED
            .into_iter()
            .chain([TokenClass::Excluded])
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown token class `{s}`")))
    }
}

/// Token ids treated as boundary or punctuation tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub ids: BTreeSet<TokenId>,
}

impl SpecialTokens {
    pub fn new(ids: impl IntoIterator<Item = TokenId>) -> Self {
        Self {
            ids: ids.into_iter().collect(),
        }
    }
}

/// One class per token position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenClassMap {
    classes: Vec<TokenClass>,
}

impl TokenClassMap {
    pub fn from_classes(classes: Vec<TokenClass>) -> Self {
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, position: usize) -> TokenClass {
        self.classes[position]
    }

    pub fn as_slice(&self) -> &[TokenClass] {
        &self.classes
    }

    /// Positions holding `class`, ascending.
    pub fn members(&self, class: TokenClass) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Classify every position of `pair`.
///
/// With `specials` given, `rest` positions whose token is special in both
/// sentences become [`TokenClass::Excluded`]; otherwise they stay `rest`.
pub fn annotate_classes(pair: &WinogradPair, specials: Option<&SpecialTokens>) -> Result<TokenClassMap> {
    if let Some((first, second)) = first_overlap(pair) {
        return Err(Error::OverlappingSpans {
            pair_id: pair.pair_id.clone(),
            first,
            second,
        });
    }
    let n = pair.len();
    let mut classes = vec![TokenClass::Rest; n];
    let mut mark = |span: crate::dataset::Span, class: TokenClass| {
        for p in span.positions().filter(|&p| p < n) {
            classes[p] = class;
        }
    };
    mark(pair.option1_span, TokenClass::Options);
    mark(pair.option2_span, TokenClass::Options);
    mark(pair.mask_span, TokenClass::Mask);
    mark(pair.context_span_a, TokenClass::Context);
    mark(pair.context_span_b, TokenClass::Context);
    mark(crate::dataset::Span::single(pair.verb_index), TokenClass::Verb);

    if let Some(specials) = specials {
        for (p, class) in classes.iter_mut().enumerate() {
            let special = specials.ids.contains(&pair.tokens_a[p]) && specials.ids.contains(&pair.tokens_b[p]);
            if *class == TokenClass::Rest && special {
                *class = TokenClass::Excluded;
            }
        }
    }
    Ok(TokenClassMap { classes })
}
