// SPDX-License-Identifier: MIT OR Apache-2.0

//! # interchange-core
//!
//! Causal interchange interventions on masked language models, applied to
//! Winograd sentence pairs.
//!
//! The crate bundles a CPU encoder whose every intermediate value can be
//! recorded and overwritten ([`model`]), the pair schema and token-class
//! annotation ([`dataset`]), noun-phrase scoring and odds-ratio effects
//! ([`scoring`]), sweep planning over layers, heads and components
//! ([`engine`]), and the statistics used to decide which cells matter
//! ([`stats`]).
//!
//! ## Weight layout
//!
//! Linear weights are `[out, in]`. The MLM decoder is tied to
//! `embeddings.word.weight`. With `layer_sharing = tied` there is a single
//! `encoder.layers.0.*` parameter set that every layer reads.
//!
//! ## Interchange in one call
//!
//! ```
//! use interchange_core::{dataset, model, scoring, patch::ActivationSite};
//!
//! let cfg = model::toy_config(2, 4, 16);
//! let bundle = model::generate_toy_model(7, &cfg).unwrap();
//! let pair = dataset::toy_pair("demo", 11, &cfg);
//! let record = scoring::compute_effect(&bundle, &pair, &ActivationSite::residual(0, 6)).unwrap();
//! assert!((record.log_effect - 0.5 * (record.log_effect_dir_ab + record.log_effect_dir_ba)).abs() < 1e-12);
//! ```

pub mod dataset;
pub mod engine;
mod error;
pub mod manifest;
pub mod model;
pub mod patch;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};

/// Vocabulary index.
pub type TokenId = u32;

/// One round of the splitmix64 mixer; used to derive independent seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
