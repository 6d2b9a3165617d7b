//! Weight files: `weights.json` lists `{name, shape, offset}` entries in
//! order, `weights.bin` holds the little-endian `f64` data they point into.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

pub const MANIFEST_FILE: &str = "weights.json";
pub const BLOB_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

pub fn encode(tensors: &[(String, Tensor)]) -> (Vec<ManifestEntry>, Vec<u8>) {
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut blob = Vec::new();
    for (name, t) in tensors {
        manifest.push(ManifestEntry { name: name.clone(), shape: t.shape().to_vec(), offset: blob.len() });
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    (manifest, blob)
}

pub fn decode(manifest: &[ManifestEntry], blob: &[u8]) -> Result<Vec<(String, Tensor)>, AutodiffError> {
    let mut expected = 0usize;
    for e in manifest {
        if e.offset != expected {
            return Err(AutodiffError::Checkpoint(format!(
                "tensor `{}` starts at byte {} but {} was expected",
                e.name, e.offset, expected
            )));
        }
        expected += 8 * e.shape.iter().product::<usize>();
    }
    if blob.len() != expected {
        return Err(AutodiffError::Checkpoint(format!(
            "blob holds {} bytes but the manifest describes {}",
            blob.len(),
            expected
        )));
    }
    manifest
        .iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let data = blob[e.offset..e.offset + 8 * n]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok((e.name.clone(), Tensor::new(e.shape.clone(), data)?))
        })
        .collect()
}

pub fn save_weights(dir: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<(), AutodiffError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (manifest, blob) = encode(tensors);
    fs::write(dir.join(BLOB_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_weights(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>, AutodiffError> {
    let dir = dir.as_ref();
    let manifest: Vec<ManifestEntry> = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let blob = fs::read(dir.join(BLOB_FILE))?;
    decode(&manifest, &blob)
}
