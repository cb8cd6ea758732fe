// SPDX-License-Identifier: MIT OR Apache-2.0

//! Display-only vocabulary: line `i` of the file is the surface form of
//! token `i`.

use std::path::Path;

use crate::error::Result;
use crate::TokenId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    pub fn parse(text: &str) -> Self {
        Self {
            tokens: text.lines().map(str::to_string).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface form, or `<id>` for ids the file does not cover.
    pub fn surface(&self, id: TokenId) -> String {
        self.tokens
            .get(id as usize)
            .cloned()
            .unwrap_or_else(|| format!("<{id}>"))
    }

    /// Join surface forms, gluing WordPiece `##` continuations and treating
    /// SentencePiece `▁` as a word boundary.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let piece = self.surface(id);
            if let Some(rest) = piece.strip_prefix("##") {
                out.push_str(rest);
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(piece.strip_prefix('\u{2581}').unwrap_or(&piece));
        }
        out
    }
}
