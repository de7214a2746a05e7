//! The `BEB1` embedding file and its JSON manifest.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"BEB1"`                |
//! | 4      | 2    | version, `u16` = 1             |
//! | 6      | 4    | row count, `u32`               |
//! | 10     | 4    | dimension, `u32`               |
//! | 14     | 1    | normalized flag (1 = unit rows)|
//! | 15     | 4·count·dim | `f32` payload, row-major|
//!
//! The manifest lives next to the binary file as `<path>.manifest.json` and
//! records row ids, optional labels, free-form provenance and the SHA-256 of
//! the payload bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::math::EmbeddingMatrix;

pub const MAGIC: [u8; 4] = *b"BEB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub version: u16,
    pub count: u32,
    pub dim: u32,
    pub normalized: bool,
}

impl EmbeddingFileHeader {
    pub fn payload_len(&self) -> usize {
        self.count as usize * self.dim as usize * 4
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..10].copy_from_slice(&self.count.to_le_bytes());
        out[10..14].copy_from_slice(&self.dim.to_le_bytes());
        out[14] = u8::from(self.normalized);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        Ok(Self {
            version,
            count: u32::from_le_bytes(bytes[6..10].try_into().unwrap()),
            dim: u32::from_le_bytes(bytes[10..14].try_into().unwrap()),
            normalized: bytes[14] == 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub ids: Vec<String>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Provenance such as model name, prompt template and dataset.
    #[serde(default)]
    pub source: BTreeMap<String, serde_json::Value>,
    /// Lower-case hex SHA-256 of the payload. Filled in on write.
    #[serde(default)]
    pub sha256: String,
}

impl Manifest {
    pub fn new(ids: Vec<String>) -> Self {
        Self {
            ids,
            ..Self::default()
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn with_source(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.source.insert(key.to_owned(), value.into());
        self
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn payload_sha256(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

fn check_manifest(manifest: &Manifest, ids: &[String]) -> Result<()> {
    if manifest.ids != ids {
        return Err(Error::ManifestMismatch("ids differ from the matrix ids".into()));
    }
    if let Some(labels) = &manifest.labels {
        if labels.len() != ids.len() {
            return Err(Error::ManifestMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                ids.len()
            )));
        }
    }
    Ok(())
}

fn write_beb(
    path: &Path,
    ids: &[String],
    dim: usize,
    data: &[f32],
    normalized: bool,
    manifest: &Manifest,
) -> Result<Manifest> {
    if ids.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    check_manifest(manifest, ids)?;
    let header = EmbeddingFileHeader {
        version: VERSION,
        count: u32::try_from(ids.len()).map_err(|_| Error::InvalidConfig("too many rows".into()))?,
        dim: u32::try_from(dim).map_err(|_| Error::InvalidConfig("dimension too large".into()))?,
        normalized,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + header.payload_len());
    bytes.extend_from_slice(&header.encode());
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let mut manifest = manifest.clone();
    manifest.sha256 = payload_sha256(&bytes[HEADER_LEN..]);
    write_file(path, &bytes)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&manifest_path(path), json)?;
    Ok(manifest)
}

/// Writes unit-norm rows (normalized flag 1) plus the sibling manifest.
/// Returns the manifest as written, hash included.
pub fn write_embeddings(path: &Path, matrix: &EmbeddingMatrix, manifest: &Manifest) -> Result<Manifest> {
    write_beb(path, matrix.ids(), matrix.dim(), matrix.as_slice(), true, manifest)
}

/// Writes raw, not necessarily normalized rows (normalized flag 0).
pub fn write_raw_embeddings(path: &Path, dim: usize, data: &[f32], manifest: &Manifest) -> Result<Manifest> {
    if dim == 0 || data.len() != manifest.ids.len() * dim {
        return Err(Error::LengthMismatch {
            left: manifest.ids.len() * dim,
            right: data.len(),
        });
    }
    write_beb(path, &manifest.ids, dim, data, false, manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEmbeddings {
    pub matrix: EmbeddingMatrix,
    pub manifest: Manifest,
    pub header: EmbeddingFileHeader,
    /// Set when the file held raw rows that were normalized on load.
    pub renormalized: bool,
}

/// Reads and validates an embedding file and its manifest.
pub fn read_embeddings(path: &Path) -> Result<LoadedEmbeddings> {
    let bytes = read_file(path)?;
    let manifest: Manifest = serde_json::from_slice(&read_file(&manifest_path(path))?)?;
    decode_embeddings(&bytes, manifest)
}

/// Validates `bytes` (header + payload) against `manifest`.
pub fn decode_embeddings(bytes: &[u8], manifest: Manifest) -> Result<LoadedEmbeddings> {
    let header = EmbeddingFileHeader::decode(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::ManifestMismatch(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let actual = payload_sha256(payload);
    if actual != manifest.sha256 {
        return Err(Error::HashMismatch {
            expected: manifest.sha256.clone(),
            actual,
        });
    }
    if header.count == 0 {
        return Err(Error::EmptyMatrix);
    }
    if manifest.ids.len() != header.count as usize {
        return Err(Error::ManifestMismatch(format!(
            "{} ids for {} rows",
            manifest.ids.len(),
            header.count
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let ids = manifest.ids.clone();
    let dim = header.dim as usize;
    let matrix = if header.normalized {
        EmbeddingMatrix::new(ids, dim, data)?
    } else {
        EmbeddingMatrix::from_raw(ids, dim, data)?
    };
    check_manifest(&manifest, matrix.ids())?;
    Ok(LoadedEmbeddings {
        matrix,
        manifest,
        header,
        renormalized: !header.normalized,
    })
}
