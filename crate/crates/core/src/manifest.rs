// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifests written next to every output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Inputs and settings that determine a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model_digest: String,
    pub dataset_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub selection: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub tool_version: String,
    /// Command-specific settings (sweep kind, filters, alpha, family size...).
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, model_bytes: &[u8], dataset_bytes: &[u8], timestamp: u64) -> Self {
        Self {
            command: command.into(),
            model_digest: sha256_hex(model_bytes),
            dataset_digest: sha256_hex(dataset_bytes),
            seeds: BTreeMap::new(),
            selection: "all".into(),
            timestamp,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            settings: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Digest of the manifest document itself.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}
