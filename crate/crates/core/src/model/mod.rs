// SPDX-License-Identifier: MIT OR Apache-2.0

//! Masked-LM encoder: configuration, weights, archive I/O and the patchable
//! forward pass.

mod archive;
mod bundle;
mod config;
mod forward;
mod kernels;
mod toy;

pub use archive::{archive_bytes, load_model, load_model_file, read_archive, write_archive, MAGIC};
pub use bundle::{ModelBundle, Tensor};
pub use config::{names, Activation, LayerSharing, ModelConfig};
pub use forward::{forward, forward_from, patched_logits, ForwardTrace, LayerTrace, Logits, PatchedOutput};
pub use kernels::log_softmax;
pub use toy::{generate_toy_model, toy_config};
