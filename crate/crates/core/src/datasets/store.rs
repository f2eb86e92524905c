//! `CPSW1` tensor files and the JSON manifest that indexes them.
//!
//! Layout: the 5 magic bytes, `u32` rank (always 4), four `u32` dims
//! `N C H W`, then `N*C*H*W` little-endian `f32` pixels and `N` label bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{infer_color, DatasetError, DomainDataset, GenSpec, Result};

pub const TENSOR_MAGIC: &[u8; 5] = b"CPSW1";
const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode(ds: &DomainDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(25 + ds.images.len() * 4 + ds.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for v in [4, ds.len(), ds.channels, ds.height, ds.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &ds.images {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&ds.labels);
    out
}

struct Decoded {
    dims: [usize; 4],
    images: Vec<f32>,
    labels: Vec<u8>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < 5 || &bytes[..5] != TENSOR_MAGIC {
        return Err(DatasetError::BadTensorMagic);
    }
    let word = |k: usize| -> Result<usize> {
        let at = 5 + 4 * k;
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| DatasetError::TruncatedFile("tensor header".into()))
    };
    if word(0)? != 4 {
        return Err(DatasetError::TruncatedFile(format!("expected rank 4, found {}", word(0)?)));
    }
    let dims = [word(1)?, word(2)?, word(3)?, word(4)?];
    let count = dims.iter().product::<usize>();
    let body = 25;
    let need = body + 4 * count + dims[0];
    if bytes.len() != need {
        return Err(DatasetError::TruncatedFile(format!("tensor needs {need} bytes, file has {}", bytes.len())));
    }
    let images = bytes[body..body + 4 * count]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Decoded { dims, images, labels: bytes[body + 4 * count..].to_vec() })
}

/// Writes one domain and returns the file checksum.
pub fn write_dataset(path: &Path, ds: &DomainDataset) -> Result<String> {
    let bytes = encode(ds);
    std::fs::write(path, &bytes).map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e })?;
    Ok(sha256_hex(&bytes))
}

/// Reads a tensor file; metadata that the file does not carry comes from `entry`.
pub fn read_dataset(path: &Path, entry: &DomainEntry) -> Result<DomainDataset> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::FileNotFound(path.to_path_buf()),
        _ => DatasetError::Io { path: path.to_path_buf(), source: e },
    })?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(DatasetError::ChecksumMismatch(path.display().to_string()));
    }
    let d = decode(&bytes)?;
    let [n, c, h, w] = d.dims;
    let plane = h * w;
    let colors = (0..n).map(|i| infer_color(&d.images[i * c * plane..(i + 1) * c * plane], plane)).collect();
    Ok(DomainDataset {
        name: entry.name.clone(),
        bias: entry.bias,
        noise: entry.noise,
        channels: c,
        height: h,
        width: w,
        images: d.images,
        labels: d.labels,
        digits: None,
        colors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub file: String,
    pub bias: f64,
    pub noise: f64,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub spec: GenSpec,
    pub domains: Vec<DomainEntry>,
}

impl Manifest {
    pub fn names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }
}

/// Writes `domain_<k>.cpsw` per domain plus `manifest.json` into `dir`.
pub fn write_domains(dir: &Path, spec: &GenSpec, datasets: &[DomainDataset]) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io { path: dir.to_path_buf(), source: e })?;
    let mut domains = Vec::new();
    for (k, ds) in datasets.iter().enumerate() {
        let file = format!("domain_{k}.cpsw");
        let sha256 = write_dataset(&dir.join(&file), ds)?;
        domains.push(DomainEntry { name: ds.name.clone(), file, bias: ds.bias, noise: ds.noise, count: ds.len(), sha256 });
    }
    let manifest = Manifest { format: "CPSW1".into(), spec: spec.clone(), domains };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, text + "\n").map_err(|e| DatasetError::Io { path, source: e })?;
    Ok(manifest)
}

/// Loads and checksum-verifies every domain listed in `dir/manifest.json`.
pub fn load_manifest(dir: &Path) -> Result<(Manifest, Vec<DomainDataset>)> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::FileNotFound(path.clone()),
        _ => DatasetError::Io { path: path.clone(), source: e },
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    let data = manifest
        .domains
        .iter()
        .map(|entry| read_dataset(&dir.join(&entry.file), entry))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, data))
}
