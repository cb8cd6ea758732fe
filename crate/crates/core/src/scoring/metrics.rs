// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::scoring::PairScores;

/// Both sentences prefer their own correct answer. Ties fail.
pub fn strict_metric(scores: &PairScores) -> bool {
    scores.logp_na_sa > scores.logp_nb_sa && scores.logp_nb_sb > scores.logp_na_sb
}

/// The preference for `N_A` is larger under `s_A` than under `s_B`, even if
/// both sentences prefer the same answer. Ties fail.
pub fn weak_metric(scores: &PairScores) -> bool {
    scores.logp_na_sa - scores.logp_nb_sa > scores.logp_na_sb - scores.logp_nb_sb
}
