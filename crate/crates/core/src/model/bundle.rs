// SPDX-License-Identifier: MIT OR Apache-2.0

//! Validated weight container.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;

/// Dense row-major `f32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }
}

/// Architecture, named weights and a free-text provenance record.
///
/// A bundle is immutable once built and can be shared freely between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
    provenance: String,
}

impl ModelBundle {
    /// Validate and assemble a bundle.
    pub fn new(
        config: ModelConfig,
        tensors: BTreeMap<String, Tensor>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        validate(&config, &tensors)?;
        Ok(Self {
            config,
            tensors,
            provenance: provenance.into(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    /// Look up a tensor that validation guaranteed to exist.
    pub(crate) fn expect(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("validated bundle lacks `{name}`"))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Mutable access for building fixtures. Shapes cannot change through
    /// this handle, but values are not re-validated.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }
}

fn validate(config: &ModelConfig, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    config.validate()?;
    let specs = config.tensor_specs();
    for (name, shape) in &specs {
        let tensor = tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.clone()))?;
        if tensor.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                actual: tensor.shape().to_vec(),
            });
        }
    }
    if let Some(extra) = tensors
        .keys()
        .find(|name| !specs.iter().any(|(n, _)| n == *name))
    {
        return Err(Error::UnexpectedTensor(extra.clone()));
    }
    for (name, tensor) in tensors {
        if let Some(index) = tensor.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteWeight {
                name: name.clone(),
                index,
            });
        }
    }
    Ok(())
}
