//! On-disk sample store.
//!
//! A store is a directory holding `manifest.json` (per-sample metadata plus
//! the byte offset of its matrix) and `samples.bin`, a flat file of 32-bit
//! little-endian floats, one row-major `max_rows x 4` block per sample.
//! Per-user sample order is generation order (session, then window start),
//! which the pairing and authentication stages rely on.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::preprocess::Sample;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BIN_FILE: &str = "samples.bin";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad store manifest: {0}")]
    BadManifest(String),
    #[error(
        "sample binary is {actual} bytes, expected {expected} ({count} samples of {stride} bytes)"
    )]
    Truncated {
        actual: u64,
        expected: u64,
        count: usize,
        stride: usize,
    },
    #[error("unknown user {0:?} in sample store")]
    UnknownUser(String),
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Metadata of one stored sample; `offset` locates its matrix in the binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreEntry {
    pub user_id: String,
    pub session_id: u32,
    pub segment_ids: Vec<u32>,
    pub true_len: usize,
    pub effective_duration: f64,
    pub offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    /// Hash of the run configuration that produced the store.
    config_hash: String,
    /// Rows per sample matrix (columns are always the 4 features).
    max_rows: usize,
    entries: Vec<StoreEntry>,
}

/// An in-memory sample store: all samples plus a per-user index.
///
/// Stores at this toolkit's scale fit comfortably in memory (4 KiB per
/// sample), so loading is eager and access is by slice.
#[derive(Debug, Clone)]
pub struct SampleStore {
    pub config_hash: String,
    pub max_rows: usize,
    samples: Vec<Sample>,
    by_user: BTreeMap<String, Vec<usize>>,
}

impl SampleStore {
    /// Build a store from freshly preprocessed samples, preserving order.
    pub fn from_samples(samples: Vec<Sample>, config_hash: &str, max_rows: usize) -> Self {
        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, s) in samples.iter().enumerate() {
            by_user.entry(s.user_id.clone()).or_default().push(idx);
        }
        Self {
            config_hash: config_hash.to_string(),
            max_rows,
            samples,
            by_user,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }

    /// Users present, in lexicographic order.
    pub fn user_ids(&self) -> Vec<&str> {
        self.by_user.keys().map(String::as_str).collect()
    }

    /// Global indices of one user's samples, in generation order.
    pub fn user_indices(&self, user_id: &str) -> Result<&[usize], StoreError> {
        self.by_user
            .get(user_id)
            .map(Vec::as_slice)
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))
    }

    /// One user's samples in generation order; `j` in pairing formulas
    /// indexes this list.
    pub fn user_samples(&self, user_id: &str) -> Result<Vec<&Sample>, StoreError> {
        Ok(self
            .user_indices(user_id)?
            .iter()
            .map(|&i| &self.samples[i])
            .collect())
    }

    /// Sample `j` within one user's ordered list.
    pub fn user_sample(&self, user_id: &str, j: usize) -> Result<&Sample, StoreError> {
        let indices = self.user_indices(user_id)?;
        indices
            .get(j)
            .map(|&i| &self.samples[i])
            .ok_or_else(|| {
                StoreError::BadManifest(format!(
                    "sample index {j} out of range for user {user_id:?} ({} samples)",
                    indices.len()
                ))
            })
    }

    /// Write `manifest.json` + `samples.bin` into `dir` (created if absent).
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let stride = self.max_rows * 4 * 4;
        let entries: Vec<StoreEntry> = self
            .samples
            .iter()
            .enumerate()
            .map(|(idx, s)| StoreEntry {
                user_id: s.user_id.clone(),
                session_id: s.session_id,
                segment_ids: s.segment_ids.clone(),
                true_len: s.true_len,
                effective_duration: s.effective_duration,
                offset: (idx * stride) as u64,
            })
            .collect();
        let manifest = StoreManifest {
            config_hash: self.config_hash.clone(),
            max_rows: self.max_rows,
            entries,
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| StoreError::BadManifest(e.to_string()))?;
        fs::write(&manifest_path, json).map_err(|e| io_err(&manifest_path, e))?;

        let bin_path = dir.join(BIN_FILE);
        let mut buf = Vec::with_capacity(self.samples.len() * stride);
        for s in &self.samples {
            for &v in &s.rows {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(&bin_path).map_err(|e| io_err(&bin_path, e))?;
        f.write_all(&buf).map_err(|e| io_err(&bin_path, e))?;
        Ok(())
    }

    /// Load a store previously written by [`SampleStore::save`].
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let manifest: StoreManifest =
            serde_json::from_str(&json).map_err(|e| StoreError::BadManifest(e.to_string()))?;
        if manifest.max_rows == 0 {
            return Err(StoreError::BadManifest("max_rows must be positive".into()));
        }
        let stride = manifest.max_rows * 4 * 4;
        let bin_path = dir.join(BIN_FILE);
        let bytes = fs::read(&bin_path).map_err(|e| io_err(&bin_path, e))?;
        let expected = (manifest.entries.len() * stride) as u64;
        if bytes.len() as u64 != expected {
            return Err(StoreError::Truncated {
                actual: bytes.len() as u64,
                expected,
                count: manifest.entries.len(),
                stride,
            });
        }
        let mut samples = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let start = entry.offset as usize;
            if start + stride > bytes.len() || start % 4 != 0 {
                return Err(StoreError::BadManifest(format!(
                    "offset {} out of range or misaligned",
                    entry.offset
                )));
            }
            if entry.true_len > manifest.max_rows {
                return Err(StoreError::BadManifest(format!(
                    "true_len {} exceeds max_rows {}",
                    entry.true_len, manifest.max_rows
                )));
            }
            let rows: Vec<f32> = bytes[start..start + stride]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            samples.push(Sample {
                user_id: entry.user_id.clone(),
                session_id: entry.session_id,
                segment_ids: entry.segment_ids.clone(),
                true_len: entry.true_len,
                effective_duration: entry.effective_duration,
                rows,
            });
        }
        Ok(Self::from_samples(
            samples,
            &manifest.config_hash,
            manifest.max_rows,
        ))
    }
}
