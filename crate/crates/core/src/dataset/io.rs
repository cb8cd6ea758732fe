// SPDX-License-Identifier: MIT OR Apache-2.0

//! Line-delimited JSON dataset files.

use std::path::Path;

use crate::dataset::pair::WinogradPair;
use crate::dataset::validate::{validate_pair, Violation};
use crate::error::{Error, Result};
use crate::TokenId;

/// A problem with one line of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub pair_id: Option<String>,
    pub message: String,
    pub violations: Vec<Violation>,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(id) = &self.pair_id {
            write!(f, " (pair `{id}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Valid pairs plus every per-line error.
#[derive(Debug, Clone, Default)]
pub struct ParsedDataset {
    pub pairs: Vec<WinogradPair>,
    pub errors: Vec<LineError>,
}

impl ParsedDataset {
    /// All pairs, or the first error.
    pub fn into_result(self) -> Result<Vec<WinogradPair>> {
        match self.errors.into_iter().next() {
            None => Ok(self.pairs),
            Some(e) => match e.pair_id {
                Some(pair_id) if !e.violations.is_empty() => Err(Error::InvalidPair {
                    pair_id,
                    violations: e.violations.iter().map(|v| v.to_string()).collect(),
                }),
                _ => Err(Error::Parse {
                    line: e.line,
                    message: e.message,
                }),
            },
        }
    }
}

/// Parse and validate every non-blank line.
pub fn parse_dataset(text: &str, mask_token_id: TokenId) -> ParsedDataset {
    let mut out = ParsedDataset::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        match serde_json::from_str::<WinogradPair>(line) {
            Err(e) => out.errors.push(LineError {
                line: line_no,
                pair_id: None,
                message: e.to_string(),
                violations: Vec::new(),
            }),
            Ok(pair) => {
                let violations = validate_pair(&pair, mask_token_id);
                if violations.is_empty() {
                    out.pairs.push(pair);
                } else {
                    let message = violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; ");
                    out.errors.push(LineError {
                        line: line_no,
                        pair_id: Some(pair.pair_id),
                        message,
                        violations,
                    });
                }
            }
        }
    }
    out
}

/// One JSON record per line, newline-terminated.
pub fn serialize_dataset(pairs: &[WinogradPair]) -> String {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair).expect("pairs always serialize"));
        out.push('\n');
    }
    out
}

/// Read a dataset file, failing on the first bad line.
pub fn load_dataset_file(path: impl AsRef<Path>, mask_token_id: TokenId) -> Result<Vec<WinogradPair>> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, mask_token_id).into_result()
}
