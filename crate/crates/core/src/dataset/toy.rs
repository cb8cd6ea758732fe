// SPDX-License-Identifier: MIT OR Apache-2.0

//! Random pairs with the canonical layout, for toy models.
//!
//! Layout for options of `m` tokens (m = 1 shown):
//!
//! ```text
//! [CLS] NP1 rest rest NP2 rest <MASK> verb context .
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::pair::{Condition, Source, Span, WinogradPair};
use crate::dataset::validate::mask_context;
use crate::model::ModelConfig;
use crate::TokenId;

/// Boundary token placed first in every toy sentence.
pub const TOY_CLS: TokenId = 1;
/// Final punctuation of every toy sentence.
pub const TOY_PERIOD: TokenId = 2;
/// Ids below this are reserved for specials.
const FIRST_ORDINARY: TokenId = 5;

/// A single-token-option context pair.
pub fn toy_pair(pair_id: &str, seed: u64, config: &ModelConfig) -> WinogradPair {
    toy_pair_with(pair_id, seed, config, Condition::Context, 1)
}

/// A pair of the requested condition whose options span `np_len` tokens.
pub fn toy_pair_with(
    pair_id: &str,
    seed: u64,
    config: &ModelConfig,
    condition: Condition,
    np_len: usize,
) -> WinogradPair {
    assert!(np_len >= 1, "options need at least one token");
    assert!(
        config.vocab_size as TokenId > FIRST_ORDINARY + 4,
        "vocabulary too small for toy pairs"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(crate::splitmix64(seed));
    let mask = config.mask_token_id;
    let draw = |rng: &mut ChaCha8Rng| loop {
        let t = rng.random_range(FIRST_ORDINARY..config.vocab_size as TokenId);
        if t != mask {
            break t;
        }
    };
    let m = np_len;
    let option1 = Span::new(1, 1 + m);
    let option2 = Span::new(3 + m, 3 + 2 * m);
    let mask_span = Span::single(4 + 2 * m);
    let verb = 5 + 2 * m;
    let context = Span::single(6 + 2 * m);
    let len = 8 + 2 * m;

    let mut tokens: Vec<TokenId> = (0..len).map(|_| draw(&mut rng)).collect();
    tokens[0] = TOY_CLS;
    tokens[len - 1] = TOY_PERIOD;
    tokens[mask_span.start] = mask;
    while tokens[option2.positions()] == tokens[option1.positions()] {
        for i in option2.positions() {
            tokens[i] = draw(&mut rng);
        }
    }
    let mut tokens_b = tokens.clone();
    let other_context = loop {
        let t = draw(&mut rng);
        if t != tokens[context.start] {
            break t;
        }
    };
    tokens_b[context.start] = other_context;
    if condition.verb_may_differ() {
        let other_verb = loop {
            let t = draw(&mut rng);
            if t != tokens[verb] {
                break t;
            }
        };
        tokens_b[verb] = other_verb;
    }

    let pair = WinogradPair {
        pair_id: pair_id.to_string(),
        condition: if condition == Condition::SyntaxOnly {
            Condition::ContextSyntax
        } else {
            condition
        },
        np_a_tokens: tokens[option1.positions()].to_vec(),
        np_b_tokens: tokens[option2.positions()].to_vec(),
        tokens_a: tokens,
        tokens_b,
        context_span_a: context,
        context_span_b: context,
        option1_span: option1,
        option2_span: option2,
        mask_span,
        verb_index: verb,
        source: Source::Constructed,
    };
    if condition == Condition::SyntaxOnly {
        mask_context(&pair, mask).expect("context_syntax input")
    } else {
        pair
    }
}

/// `count` pairs with ids `toy-000`, `toy-001`, ...
pub fn toy_dataset(seed: u64, count: usize, config: &ModelConfig, condition: Condition, np_len: usize) -> Vec<WinogradPair> {
    (0..count)
        .map(|i| {
            toy_pair_with(
                &format!("toy-{i:03}"),
                seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9),
                config,
                condition,
                np_len,
            )
        })
        .collect()
}
