//! Model file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes   "MTEM"
//! version  u32       currently 1
//! cfg_len  u64       length of the config JSON
//! config   cfg_len   ModelConfig as JSON
//! params   f32 × N   raw values, visit_params order:
//!                    conv1.weight, conv1.bias, bn1.gamma, bn1.beta,
//!                    conv2…, conv3…, lstm1.w_ih, lstm1.w_hh, lstm1.bias,
//!                    lstm2…, fc1.weight, fc1.bias, fc2…, fc3…
//! buffers  f32 × M   bn1.running_mean, bn1.running_var, bn2…, bn3…
//! checksum 32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Tensor lengths are implied by the config, so any truncation or edit
//! shows up as a length or checksum mismatch.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EmbeddingModel, Model, ModelConfig, ModelError};

const MAGIC: &[u8; 4] = b"MTEM";
const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptModelFile(msg.into())
}

/// Serialize an f32 model. Takes `&mut` only because the parameter walk
/// reuses the training-side visitor; values are not modified.
pub fn save(model: &mut EmbeddingModel, path: &Path) -> Result<(), ModelError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    let config_json =
        serde_json::to_vec(&model.config).map_err(|e| corrupt(format!("config: {e}")))?;
    bytes.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&config_json);
    model.visit_params(&mut |_, v, _| {
        for &x in v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    });
    model.visit_buffers(&mut |_, v| {
        for &x in v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    });
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    fs::write(path, bytes).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load(path: &Path) -> Result<EmbeddingModel, ModelError> {
    let bytes = fs::read(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if bytes.len() < 4 + 4 + 8 + 32 {
        return Err(corrupt("file shorter than the fixed header"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(corrupt("checksum mismatch (truncated or edited file)"));
    }
    if &body[..4] != MAGIC {
        return Err(corrupt("bad magic; not a model file"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(format!(
            "model file version {version}, this build reads version {VERSION}"
        )));
    }
    let cfg_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let params_at = 16usize.checked_add(cfg_len).ok_or_else(|| corrupt("config length overflows"))?;
    if params_at > body.len() {
        return Err(corrupt("config block extends past the file"));
    }
    let config: ModelConfig = serde_json::from_slice(&body[16..params_at])
        .map_err(|e| corrupt(format!("config JSON: {e}")))?;
    let mut model = Model::<f32>::new(&config)?;
    let mut cursor = params_at;
    let mut fill_error: Option<ModelError> = None;
    let fill = |dst: &mut [f32], cursor: &mut usize, err: &mut Option<ModelError>| {
        if err.is_some() {
            return;
        }
        let need = dst.len() * 4;
        if *cursor + need > body.len() {
            *err = Some(corrupt("parameter block shorter than the config implies"));
            return;
        }
        for (k, chunk) in body[*cursor..*cursor + need].chunks_exact(4).enumerate() {
            dst[k] = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        *cursor += need;
    };
    model.visit_params(&mut |_, v, _| fill(v, &mut cursor, &mut fill_error));
    model.visit_buffers(&mut |_, v| fill(v, &mut cursor, &mut fill_error));
    if let Some(e) = fill_error {
        return Err(e);
    }
    if cursor != body.len() {
        return Err(corrupt(format!(
            "{} trailing bytes after the last tensor",
            body.len() - cursor
        )));
    }
    Ok(model)
}
