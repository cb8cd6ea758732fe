// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use crate::patch::ActivationSite;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading, running or analysing a model.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    // -- archive / bundle -------------------------------------------------
    /// The stream does not start with `CPRB1`.
    #[error("bad magic bytes: archive does not start with \"CPRB1\"")]
    BadMagic,
    /// The stream ended before the declared header or payload.
    #[error("truncated archive: {0}")]
    Truncated(String),
    /// The header is not a well-formed document.
    #[error("malformed archive header: {0}")]
    Header(String),
    /// A tensor required by the configuration is absent.
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    /// A tensor is present that the configuration does not use.
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    /// A tensor has the wrong shape.
    #[error("tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        /// Tensor name.
        name: String,
        /// Shape required by the configuration.
        expected: Vec<usize>,
        /// Shape found in the archive.
        actual: Vec<usize>,
    },
    /// A weight is NaN or infinite.
    #[error("tensor `{name}` holds a non-finite value at flat index {index}")]
    NonFiniteWeight {
        /// Tensor name.
        name: String,
        /// Row-major flat index of the first offending value.
        index: usize,
    },
    /// The configuration violates one of its invariants.
    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    // -- forward pass -----------------------------------------------------
    /// Forward passes need at least one token.
    #[error("empty token sequence")]
    EmptySequence,
    /// The sequence exceeds the position table.
    #[error("sequence of {len} tokens exceeds max_positions = {max}")]
    SequenceTooLong {
        /// Sequence length.
        len: usize,
        /// Model limit.
        max: usize,
    },
    /// A token id is not in the vocabulary.
    #[error("token id {token} at position {position} is outside the vocabulary")]
    TokenOutOfRange {
        /// Position in the sequence.
        position: usize,
        /// Offending id.
        token: u32,
    },
    /// A patch addresses a site that does not exist.
    #[error("activation site {site} is out of range: {reason}")]
    SiteOutOfRange {
        /// The offending site.
        site: ActivationSite,
        /// Which index is out of bounds.
        reason: String,
    },
    /// A patch vector has the wrong length for its site.
    #[error("patch for {site} has {actual} values, expected {expected}")]
    PatchDimension {
        /// The offending site.
        site: ActivationSite,
        /// Dimensionality of the site.
        expected: usize,
        /// Supplied length.
        actual: usize,
    },
    /// Two patches address the same concrete site.
    #[error("duplicate patch for {0}")]
    DuplicatePatch(ActivationSite),
    /// A resumed pass was given a base trace that was itself patched.
    #[error("cannot resume from a patched trace")]
    PatchedBase,
    /// An intermediate value became NaN or infinite.
    #[error("non-finite {stage} at layer {layer}, position {position}")]
    NonFinite {
        /// Where in the layer the value appeared.
        stage: &'static str,
        /// Layer index (equal to `num_layers` for the output head).
        layer: usize,
        /// Token position.
        position: usize,
    },

    // -- dataset ----------------------------------------------------------
    /// One line of a dataset file could not be parsed.
    #[error("line {line}: {message}")]
    Parse {
        /// 1-based line number.
        line: usize,
        /// Parser message.
        message: String,
    },
    /// A pair failed validation.
    #[error("pair `{pair_id}` is invalid: {}", .violations.join("; "))]
    InvalidPair {
        /// Identifier of the pair.
        pair_id: String,
        /// Human-readable violations.
        violations: Vec<String>,
    },
    /// An operation was applied to a pair of the wrong condition.
    #[error("pair `{pair_id}` has condition {actual}, expected {expected}")]
    WrongCondition {
        /// Identifier of the pair.
        pair_id: String,
        /// Required condition.
        expected: String,
        /// Condition found.
        actual: String,
    },
    /// Annotated spans overlap.
    #[error("pair `{pair_id}`: {first} overlaps {second}")]
    OverlappingSpans {
        /// Identifier of the pair.
        pair_id: String,
        /// First span label.
        first: &'static str,
        /// Second span label.
        second: &'static str,
    },
    /// A pair identifier could not be resolved.
    #[error("unknown pair `{0}`")]
    UnknownPair(String),

    // -- scoring ----------------------------------------------------------
    /// Scoring needs at least one NP token.
    #[error("noun phrase has no tokens")]
    EmptyNounPhrase,
    /// The mask span does not fit the sentence.
    #[error("mask span {start}..{end} is out of range for a sentence of {len} tokens")]
    MaskSpanOutOfRange {
        /// Span start.
        start: usize,
        /// Span end (exclusive).
        end: usize,
        /// Sentence length.
        len: usize,
    },
    /// A score or effect came out NaN or infinite.
    #[error("non-finite score: {0}")]
    NonFiniteScore(String),
    /// A correlation was requested for a constant vector.
    #[error("zero-variance vector: {0}")]
    ZeroVariance(String),
    /// The correct answer could not be matched to either option span.
    #[error("pair `{0}`: cannot tell which option span holds the correct answer")]
    UnresolvedOption(String),
    /// A token class has no members in a pair.
    #[error("pair `{pair_id}` has no tokens of class {class}")]
    EmptyClass {
        /// Identifier of the pair.
        pair_id: String,
        /// Class name.
        class: String,
    },

    // -- statistics -------------------------------------------------------
    /// Statistics need at least one (or two) samples.
    #[error("not enough samples: need at least {needed}, got {got}")]
    NotEnoughSamples {
        /// Minimum required.
        needed: usize,
        /// Provided.
        got: usize,
    },
    /// The sample variance is zero, so the t statistic is undefined.
    #[error("sample variance is zero")]
    DegenerateVariance,
    /// A confidence level outside (0, 1).
    #[error("confidence level {0} is not in (0, 1)")]
    InvalidLevel(f64),
    /// Two grids do not share the same cells.
    #[error("grid axes differ: {0}")]
    AxisMismatch(String),
    /// Any other bad argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadMagic => "bad_magic",
            Error::Truncated(_) => "truncated",
            Error::Header(_) => "header",
            Error::MissingTensor(_) => "missing_tensor",
            Error::UnexpectedTensor(_) => "unexpected_tensor",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFiniteWeight { .. } => "non_finite_weight",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptySequence => "empty_sequence",
            Error::SequenceTooLong { .. } => "sequence_too_long",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::SiteOutOfRange { .. } => "site_out_of_range",
            Error::PatchDimension { .. } => "patch_dimension",
            Error::DuplicatePatch(_) => "duplicate_patch",
            Error::PatchedBase => "patched_base",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::InvalidPair { .. } => "invalid_pair",
            Error::WrongCondition { .. } => "wrong_condition",
            Error::OverlappingSpans { .. } => "overlapping_spans",
            Error::UnknownPair(_) => "unknown_pair",
            Error::EmptyNounPhrase => "empty_noun_phrase",
            Error::MaskSpanOutOfRange { .. } => "mask_span_out_of_range",
            Error::NonFiniteScore(_) => "non_finite_score",
            Error::ZeroVariance(_) => "zero_variance",
            Error::UnresolvedOption(_) => "unresolved_option",
            Error::EmptyClass { .. } => "empty_class",
            Error::NotEnoughSamples { .. } => "not_enough_samples",
            Error::DegenerateVariance => "degenerate_variance",
            Error::InvalidLevel(_) => "invalid_level",
            Error::AxisMismatch(_) => "axis_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
        }
    }
}
