//! Checkpoint file layout:
//!
//! ```text
//! [u64 LE: header length H][H bytes: JSON header][payload: f32 LE arrays]
//! ```
//!
//! The header carries the config, ladder, training mode, vocabulary and a
//! manifest of `{name, shape, offset, len}` entries; offsets are byte offsets
//! into the payload and arrays are stored contiguously in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SubModelLadder, TrainingMode, TransformerConfig};
use super::model::TinyTransformer;
use super::params::{tensor_shapes, Params};
use crate::error::{Error, Result};
use crate::model::Vocabulary;

pub const FORMAT_TAG: &str = "s2d-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Number of f32 values.
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config: TransformerConfig,
    pub ladder: Vec<usize>,
    pub training_mode: TrainingMode,
    pub vocab: Vocabulary,
    pub arrays: Vec<ArrayEntry>,
}

pub fn write_checkpoint(model: &TinyTransformer) -> Result<Vec<u8>> {
    let shapes = tensor_shapes(&model.config);
    let tensors = model.params.tensors();
    let mut arrays = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for ((name, shape), t) in shapes.into_iter().zip(&tensors) {
        arrays.push(ArrayEntry {
            name,
            shape,
            offset,
            len: t.len(),
        });
        offset += t.len() * 4;
    }
    let header = CheckpointHeader {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        config: model.config,
        ladder: model.ladder.exits().to_vec(),
        training_mode: model.training_mode,
        vocab: model.vocab.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<TinyTransformer> {
    let corrupt = |m: String| Error::CorruptHeader(m);
    if bytes.len() < 8 {
        return Err(corrupt("missing header length prefix".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| h.checked_add(8))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            corrupt(format!(
                "declared header length {header_len} exceeds file size {}",
                bytes.len()
            ))
        })?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| corrupt(format!("invalid header JSON: {e}")))?;
    if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    header
        .config
        .validate()
        .map_err(|e| corrupt(format!("invalid config: {e}")))?;

    let expected = tensor_shapes(&header.config);
    if expected.len() != header.arrays.len() {
        return Err(corrupt(format!(
            "manifest lists {} arrays, config implies {}",
            header.arrays.len(),
            expected.len()
        )));
    }
    let mut offset = 0;
    for ((name, shape), entry) in expected.iter().zip(&header.arrays) {
        if *name != entry.name {
            return Err(corrupt(format!(
                "manifest entry `{}` where `{name}` was expected",
                entry.name
            )));
        }
        let want: usize = shape.iter().product();
        let declared: usize = entry.shape.iter().product();
        if want != declared || want != entry.len {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                expected: want,
                found: if declared != want {
                    declared
                } else {
                    entry.len
                },
            });
        }
        if entry.offset != offset {
            return Err(corrupt(format!(
                "array `{name}` at offset {} instead of {offset}",
                entry.offset
            )));
        }
        offset += entry.len * 4;
    }
    if header.vocab.size() != header.config.vocab_size {
        return Err(corrupt(format!(
            "vocabulary has {} symbols, config declares {}",
            header.vocab.size(),
            header.config.vocab_size
        )));
    }
    let ladder = SubModelLadder::new(header.ladder.clone(), header.config.n_layers)
        .map_err(|e| corrupt(format!("invalid ladder: {e}")))?;

    let payload = &bytes[header_end..];
    if payload.len() < offset {
        return Err(Error::Truncated {
            expected: offset,
            found: payload.len(),
        });
    }
    if payload.len() > offset {
        return Err(corrupt(format!(
            "{} trailing bytes after payload",
            payload.len() - offset
        )));
    }
    let arrays = header
        .arrays
        .iter()
        .map(|e| {
            payload[e.offset..e.offset + e.len * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect();
    Ok(TinyTransformer::from_parts(
        header.config,
        ladder,
        header.vocab,
        header.training_mode,
        Params::from_tensors(&header.config, arrays),
    ))
}

pub fn save_checkpoint(model: &TinyTransformer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TinyTransformer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
