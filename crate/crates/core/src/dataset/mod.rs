// SPDX-License-Identifier: MIT OR Apache-2.0

//! Four-condition Winograd pairs: schema, validation, masking and
//! token-class annotation.
//!
//! Pairs arrive pre-tokenized, one JSON record per line:
//!
//! ```json
//! {"pair_id":"wsc-12","condition":"context","tokens_A":[..],"tokens_B":[..],
//!  "context_span_A":[8,9],"context_span_B":[8,9],"option1_span":[0,1],
//!  "option2_span":[4,5],"mask_span":[6,7],"verb_index":7,
//!  "np_A_tokens":[..],"np_B_tokens":[..],"source":"superglue_wsc"}
//! ```

mod classes;
mod io;
mod pair;
mod toy;
mod validate;
mod vocab;

pub use classes::{annotate_classes, SpecialTokens, TokenClass, TokenClassMap};
pub use io::{load_dataset_file, parse_dataset, serialize_dataset, LineError, ParsedDataset};
pub use pair::{Condition, Side, Source, Span, WinogradPair};
pub use toy::{toy_dataset, toy_pair, toy_pair_with, TOY_CLS, TOY_PERIOD};
pub use validate::{mask_context, validate_pair, Violation};
pub use vocab::Vocab;
