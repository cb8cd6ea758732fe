// SPDX-License-Identifier: MIT OR Apache-2.0

//! Interchange sweeps: layer-wise over the residual stream, head-wise over
//! transformation/query/key/value, cumulative transformation prefixes, and
//! the synonym control.
//!
//! Multi-token classes are intervened one token at a time and the class
//! cell is the mean of its members' effects. Results come back in a fixed
//! order (layers outer, then heads, components, classes or tokens), however
//! rayon schedules the work.

mod table;

pub use table::{
    format_results, grids_from_rows, parse_results, sanitize, CellKey, GridFile, SweepGrid, SweepRow, RESULTS_HEADER,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{annotate_classes, Condition, SpecialTokens, TokenClass, TokenClassMap, WinogradPair};
use crate::error::{Error, Result};
use crate::model::{forward, ForwardTrace, ModelBundle};
use crate::patch::{ActivationSite, Component, PatchSet};
use crate::scoring::{EffectContext, EffectValues};
use crate::TokenId;

/// Unpatched pass, recording every intermediate value.
pub fn record(model: &ModelBundle, tokens: &[TokenId]) -> Result<ForwardTrace> {
    forward(model, tokens, &PatchSet::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Layers,
    Heads,
    Cumulative,
    Synonym,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Layers => "layers",
            SweepKind::Heads => "heads",
            SweepKind::Cumulative => "cumulative",
            SweepKind::Synonym => "synonym",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layers" => Ok(SweepKind::Layers),
            "heads" => Ok(SweepKind::Heads),
            "cumulative" => Ok(SweepKind::Cumulative),
            "synonym" => Ok(SweepKind::Synonym),
            other => Err(Error::InvalidArgument(format!("unknown sweep kind `{other}`"))),
        }
    }
}

/// Restrictions on which layers, heads and components a sweep visits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepFilters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<usize>>,
    /// Head-scoped components for head sweeps; all four when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<Component>>,
}

impl SweepFilters {
    fn select(wanted: &Option<Vec<usize>>, count: usize, what: &str) -> Result<Vec<usize>> {
        match wanted {
            None => Ok((0..count).collect()),
            Some(list) => {
                if let Some(bad) = list.iter().find(|&&i| i >= count) {
                    return Err(Error::InvalidArgument(format!("{what} {bad} out of range (model has {count})")));
                }
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                Ok(list)
            }
        }
    }

    pub fn layer_list(&self, model: &ModelBundle) -> Result<Vec<usize>> {
        Self::select(&self.layers, model.config().num_layers, "layer")
    }

    pub fn head_list(&self, model: &ModelBundle) -> Result<Vec<usize>> {
        Self::select(&self.heads, model.config().num_heads, "head")
    }

    pub fn component_list(&self) -> Result<Vec<Component>> {
        match &self.components {
            None => Ok(Component::HEAD_SCOPED.to_vec()),
            Some(list) => {
                if let Some(bad) = list.iter().find(|c| !c.is_head_scoped()) {
                    return Err(Error::InvalidArgument(format!("{bad} is not a head component")));
                }
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                Ok(list)
            }
        }
    }
}

/// Everything needed to run a sweep over a list of pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    #[serde(default)]
    pub filters: SweepFilters,
    /// Tokens left out of class aggregates; `None` keeps every token.
    #[serde(default)]
    pub specials: Option<SpecialTokens>,
}

impl SweepSpec {
    pub fn new(kind: SweepKind) -> Self {
        Self {
            kind,
            filters: SweepFilters::default(),
            specials: None,
        }
    }

    /// Number of result rows a single pair of `len` tokens produces.
    pub fn rows_per_pair(&self, model: &ModelBundle, len: usize) -> Result<usize> {
        let layers = self.filters.layer_list(model)?.len();
        let classes = TokenClass::AGGREGATED.len();
        Ok(match self.kind {
            SweepKind::Layers | SweepKind::Synonym => layers * len,
            SweepKind::Heads => layers * self.filters.head_list(model)?.len() * self.filters.component_list()?.len() * classes,
            SweepKind::Cumulative => layers * classes,
        })
    }
}

/// Run `spec` on every pair, in order.
pub fn run_sweep(model: &ModelBundle, pairs: &[WinogradPair], spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.kind == SweepKind::Synonym {
        if let Some(p) = pairs.iter().find(|p| p.condition != Condition::Synonym) {
            return Err(Error::WrongCondition {
                pair_id: p.pair_id.clone(),
                expected: Condition::Synonym.to_string(),
                actual: p.condition.to_string(),
            });
        }
    }
    let per_pair: Vec<Vec<SweepRow>> = pairs
        .iter()
        .map(|pair| {
            let classes = annotate_classes(pair, spec.specials.as_ref())?;
            match spec.kind {
                SweepKind::Layers | SweepKind::Synonym => layer_sweep(model, pair, &classes, &spec.filters),
                SweepKind::Heads => head_sweep(model, pair, &classes, &spec.filters),
                SweepKind::Cumulative => cumulative_sweep(model, pair, &classes, &spec.filters),
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

fn member_lists(pair: &WinogradPair, classes: &TokenClassMap) -> Result<Vec<(TokenClass, Vec<usize>)>> {
    if classes.len() != pair.len() {
        return Err(Error::InvalidArgument(format!(
            "class map covers {} tokens, pair has {}",
            classes.len(),
            pair.len()
        )));
    }
    TokenClass::AGGREGATED
        .into_iter()
        .map(|class| {
            let members = classes.members(class);
            if members.is_empty() {
                Err(Error::EmptyClass {
                    pair_id: pair.pair_id.clone(),
                    class: class.to_string(),
                })
            } else {
                Ok((class, members))
            }
        })
        .collect()
}

fn class_row(
    pair: &WinogradPair,
    layer: usize,
    head: Option<usize>,
    component: Component,
    class: TokenClass,
    effects: &[EffectValues],
) -> SweepRow {
    let n = effects.len() as f64;
    let mean = |f: fn(&EffectValues) -> f64| effects.iter().map(f).sum::<f64>() / n;
    SweepRow {
        pair_id: pair.pair_id.clone(),
        condition: pair.condition,
        layer,
        head,
        component,
        class,
        position: None,
        log_effect_dir_ab: mean(EffectValues::dir_ab),
        log_effect_dir_ba: mean(EffectValues::dir_ba),
        log_effect: mean(EffectValues::mean),
    }
}

/// Interchange `residual_in` at every `(layer, token)`. One row per token.
pub fn layer_sweep(
    model: &ModelBundle,
    pair: &WinogradPair,
    classes: &TokenClassMap,
    filters: &SweepFilters,
) -> Result<Vec<SweepRow>> {
    member_lists(pair, classes)?;
    let ctx = EffectContext::new(model, pair)?;
    let sites: Vec<ActivationSite> = filters
        .layer_list(model)?
        .into_iter()
        .flat_map(|layer| (0..pair.len()).map(move |t| ActivationSite::residual(layer, t)))
        .collect();
    sites
        .par_iter()
        .map(|site| {
            let effect = ctx.effect(std::slice::from_ref(site))?;
            Ok(SweepRow {
                pair_id: pair.pair_id.clone(),
                condition: pair.condition,
                layer: site.layer,
                head: None,
                component: Component::ResidualIn,
                class: classes.get(site.position),
                position: Some(site.position),
                log_effect_dir_ab: effect.dir_ab(),
                log_effect_dir_ba: effect.dir_ba(),
                log_effect: effect.mean(),
            })
        })
        .collect()
}

/// Interchange one head's component at each member token of each class.
/// One row per `(layer, head, component, class)`.
pub fn head_sweep(
    model: &ModelBundle,
    pair: &WinogradPair,
    classes: &TokenClassMap,
    filters: &SweepFilters,
) -> Result<Vec<SweepRow>> {
    let members = member_lists(pair, classes)?;
    let ctx = EffectContext::new(model, pair)?;
    let components = filters.component_list()?;
    let heads = filters.head_list(model)?;
    let mut cells = Vec::new();
    for layer in filters.layer_list(model)? {
        for &head in &heads {
            for &component in &components {
                for (class, tokens) in &members {
                    cells.push((layer, head, component, *class, tokens));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(layer, head, component, class, tokens)| {
            let effects = tokens
                .iter()
                .map(|&t| ctx.effect(&[ActivationSite::head(layer, t, component, head)]))
                .collect::<Result<Vec<_>>>()?;
            Ok(class_row(pair, layer, Some(head), component, class, &effects))
        })
        .collect()
}

/// Sites interchanged by the cumulative cell `last_layer` at `position`:
/// all heads' transformations at layers `0..=last_layer`.
pub fn cumulative_sites(last_layer: usize, position: usize) -> Vec<ActivationSite> {
    (0..=last_layer)
        .map(|l| ActivationSite::all_heads(l, position, Component::Transformation))
        .collect()
}

/// Interchange transformations at a layer and every layer before it, one
/// member token at a time. One row per `(layer, class)`.
pub fn cumulative_sweep(
    model: &ModelBundle,
    pair: &WinogradPair,
    classes: &TokenClassMap,
    filters: &SweepFilters,
) -> Result<Vec<SweepRow>> {
    let members = member_lists(pair, classes)?;
    let ctx = EffectContext::new(model, pair)?;
    let mut cells = Vec::new();
    for layer in filters.layer_list(model)? {
        for (class, tokens) in &members {
            cells.push((layer, *class, tokens));
        }
    }
    cells
        .par_iter()
        .map(|&(layer, class, tokens)| {
            let effects = tokens
                .iter()
                .map(|&t| ctx.effect(&cumulative_sites(layer, t)))
                .collect::<Result<Vec<_>>>()?;
            Ok(class_row(pair, layer, None, Component::Transformation, class, &effects))
        })
        .collect()
}

/// Layer sweep over synonym pairs, reported separately.
pub fn synonym_control(
    model: &ModelBundle,
    pairs: &[WinogradPair],
    specials: Option<&SpecialTokens>,
) -> Result<SweepGrid> {
    let spec = SweepSpec {
        kind: SweepKind::Synonym,
        filters: SweepFilters::default(),
        specials: specials.cloned(),
    };
    SweepGrid::from_rows(&run_sweep(model, pairs, &spec)?)
}
