// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `CPRB1` tensor archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CPRB1"                 5 bytes
//! header_len              u64
//! header                  header_len bytes of UTF-8 JSON
//! payload                 raw f32 values
//! ```
//!
//! The header maps each tensor name to `{"dtype": "f32", "shape": [..],
//! "byte_offset": n}`. One extra key, `"__metadata__"`, holds
//! `{"config": .., "provenance": ..}`. Offsets are relative to the start of
//! the payload and tensors are row-major. The writer emits tensors
//! in name order, so equal bundles give equal bytes.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::bundle::{ModelBundle, Tensor};
use crate::model::config::ModelConfig;

/// Magic bytes opening every archive.
pub const MAGIC: &[u8; 5] = b"CPRB1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "__metadata__")]
    metadata: Metadata,
    #[serde(flatten)]
    tensors: BTreeMap<String, TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    #[serde(default)]
    provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    dtype: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

/// Serialize a bundle.
pub fn write_archive<W: Write>(bundle: &ModelBundle, mut out: W) -> Result<()> {
    let mut offset = 0u64;
    let mut entries = BTreeMap::new();
    for (name, tensor) in bundle.tensors() {
        entries.insert(
            name.clone(),
            TensorEntry {
                dtype: "f32".into(),
                shape: tensor.shape().to_vec(),
                byte_offset: offset,
            },
        );
        offset += 4 * tensor.data().len() as u64;
    }
    let header = Header {
        metadata: Metadata {
            config: bundle.config().clone(),
            provenance: bundle.provenance().to_string(),
        },
        tensors: entries,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Header(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for tensor in bundle.tensors().values() {
        let mut buf = Vec::with_capacity(tensor.data().len() * 4);
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Serialize a bundle into memory.
pub fn archive_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let mut out = Vec::new();
    write_archive(bundle, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Read and validate a bundle from a byte stream.
pub fn read_archive<R: Read>(mut input: R) -> Result<ModelBundle> {
    let mut magic = [0u8; 5];
    read_exact(&mut input, &mut magic, "magic bytes")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut len = [0u8; 8];
    read_exact(&mut input, &mut len, "header length")?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Header("header length does not fit in memory".into()))?;
    // Read through `take` so a corrupt length cannot trigger a huge allocation.
    let mut header = Vec::new();
    (&mut input).take(len as u64).read_to_end(&mut header)?;
    if header.len() < len {
        return Err(Error::Truncated(format!(
            "header declares {len} bytes, stream holds {}",
            header.len()
        )));
    }
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Header(e.to_string()))?;
    header.metadata.config.validate()?;

    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;

    let mut tensors = BTreeMap::new();
    for (name, entry) in header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Header(format!(
                "tensor `{name}` has unsupported dtype `{}`",
                entry.dtype
            )));
        }
        let count: usize = entry.shape.iter().product();
        let start = usize::try_from(entry.byte_offset)
            .map_err(|_| Error::Header(format!("tensor `{name}` offset overflows")))?;
        let end = start
            .checked_add(count * 4)
            .ok_or_else(|| Error::Header(format!("tensor `{name}` extent overflows")))?;
        let bytes = payload.get(start..end).ok_or_else(|| {
            Error::Truncated(format!(
                "tensor `{name}` needs payload bytes {start}..{end}, payload has {}",
                payload.len()
            ))
        })?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(name, Tensor::new(entry.shape, data)?);
    }
    ModelBundle::new(header.metadata.config, tensors, header.metadata.provenance)
}

/// Parse an in-memory archive.
pub fn load_model(bytes: &[u8]) -> Result<ModelBundle> {
    read_archive(bytes)
}

/// Read an archive from disk.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let file = std::fs::File::open(path)?;
    read_archive(std::io::BufReader::new(file))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated(format!("stream ends inside the {what}")),
        _ => Error::Io(e),
    })
}
