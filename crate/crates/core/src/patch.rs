// SPDX-License-Identifier: MIT OR Apache-2.0

//! Addresses of patchable activations and sets of replacement vectors.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Which intermediate value of an encoder layer a site refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Residual stream entering the layer, before its first layer norm.
    ResidualIn,
    /// A head's context vector before the attention output projection.
    Transformation,
    Query,
    Key,
    Value,
}

impl Component {
    /// The four per-head components, in reporting order.
    pub const HEAD_SCOPED: [Component; 4] = [
        Component::Transformation,
        Component::Query,
        Component::Key,
        Component::Value,
    ];

    pub fn is_head_scoped(self) -> bool {
        !matches!(self, Component::ResidualIn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Component::ResidualIn => "residual_in",
            Component::Transformation => "transformation",
            Component::Query => "query",
            Component::Key => "key",
            Component::Value => "value",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "residual_in" => Component::ResidualIn,
            "transformation" => Component::Transformation,
            "query" => Component::Query,
            "key" => Component::Key,
            "value" => Component::Value,
            other => {
                return Err(Error::InvalidArgument(format!("unknown component `{other}`")))
            }
        })
    }
}

/// One head, or every head at once (the concatenated vector).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Head {
    Index(usize),
    All(AllHeads),
}

/// Serialized as the string `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AllHeads {
    #[serde(rename = "all")]
    All,
}

impl Head {
    pub const ALL: Head = Head::All(AllHeads::All);
}

/// Address of one patchable value: `(layer, token position, component,
/// head)`. `head` is present exactly when the component is head-scoped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivationSite {
    pub layer: usize,
    pub position: usize,
    pub component: Component,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<Head>,
}

impl ActivationSite {
    pub fn residual(layer: usize, position: usize) -> Self {
        Self {
            layer,
            position,
            component: Component::ResidualIn,
            head: None,
        }
    }

    pub fn head(layer: usize, position: usize, component: Component, head: usize) -> Self {
        Self {
            layer,
            position,
            component,
            head: Some(Head::Index(head)),
        }
    }

    pub fn all_heads(layer: usize, position: usize, component: Component) -> Self {
        Self {
            layer,
            position,
            component,
            head: Some(Head::ALL),
        }
    }

    /// The same site at another token position.
    pub fn at(self, position: usize) -> Self {
        Self { position, ..self }
    }

    /// Number of values stored at this site.
    pub fn width(&self, config: &ModelConfig) -> usize {
        match self.head {
            Some(Head::Index(_)) => config.head_dim,
            _ => config.hidden_dim,
        }
    }

    /// First column of the site inside the `[T, hidden_dim]` row.
    pub(crate) fn column(&self, config: &ModelConfig) -> usize {
        match self.head {
            Some(Head::Index(h)) => h * config.head_dim,
            _ => 0,
        }
    }

    /// Check the site against a model and a sequence length.
    pub fn check(&self, config: &ModelConfig, seq_len: usize) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::SiteOutOfRange {
                site: *self,
                reason,
            })
        };
        if self.layer >= config.num_layers {
            return fail(format!("model has {} layers", config.num_layers));
        }
        if self.position >= seq_len {
            return fail(format!("sequence has {seq_len} tokens"));
        }
        match (self.component.is_head_scoped(), self.head) {
            (true, None) => return fail(format!("{} needs a head", self.component)),
            (false, Some(_)) => return fail(format!("{} takes no head", self.component)),
            (true, Some(Head::Index(h))) if h >= config.num_heads => {
                return fail(format!("model has {} heads", config.num_heads))
            }
            _ => {}
        }
        Ok(())
    }

    /// Concrete `(layer, position, component, head)` cells the site covers.
    pub(crate) fn concrete(&self, config: &ModelConfig) -> Vec<(usize, usize, Component, usize)> {
        match self.head {
            None => vec![(self.layer, self.position, self.component, 0)],
            Some(Head::Index(h)) => vec![(self.layer, self.position, self.component, h)],
            Some(Head::All(_)) => (0..config.num_heads)
                .map(|h| (self.layer, self.position, self.component, h))
                .collect(),
        }
    }
}

impl fmt::Display for ActivationSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@L{}/t{}", self.component, self.layer, self.position)?;
        match self.head {
            Some(Head::Index(h)) => write!(f, "/h{h}"),
            Some(Head::All(_)) => write!(f, "/h*"),
            None => Ok(()),
        }
    }
}

/// A site together with the vector that replaces its computed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub site: ActivationSite,
    pub values: Vec<f32>,
}

/// Replacement vectors applied during one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    entries: Vec<Patch>,
}

impl PatchSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, site: ActivationSite, values: Vec<f32>) {
        self.entries.push(Patch { site, values });
    }

    pub fn with(mut self, site: ActivationSite, values: Vec<f32>) -> Self {
        self.push(site, values);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Patch> {
        self.entries.iter()
    }

    /// Earliest layer touched by any entry.
    pub fn min_layer(&self) -> Option<usize> {
        self.entries.iter().map(|p| p.site.layer).min()
    }

    /// Check ranges, widths and uniqueness against a model and sequence.
    pub fn check(&self, config: &ModelConfig, seq_len: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for patch in &self.entries {
            patch.site.check(config, seq_len)?;
            let expected = patch.site.width(config);
            if patch.values.len() != expected {
                return Err(Error::PatchDimension {
                    site: patch.site,
                    expected,
                    actual: patch.values.len(),
                });
            }
            for cell in patch.site.concrete(config) {
                if !seen.insert(cell) {
                    return Err(Error::DuplicatePatch(patch.site));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(ActivationSite, Vec<f32>)> for PatchSet {
    fn from_iter<I: IntoIterator<Item = (ActivationSite, Vec<f32>)>>(iter: I) -> Self {
        iter.into_iter().map(|(site, values)| Patch { site, values }).collect()
    }
}

impl FromIterator<Patch> for PatchSet {
    fn from_iter<I: IntoIterator<Item = Patch>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
