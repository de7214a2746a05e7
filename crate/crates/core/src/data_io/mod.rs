//! Embedding files, experiment configuration and class splits.

mod config;
mod format;
mod splits;

pub use config::{DataPaths, ExperimentConfig, OutputPaths};
pub use format::{
    decode_embeddings, manifest_path, payload_sha256, read_embeddings, write_embeddings,
    write_raw_embeddings, EmbeddingFileHeader, LoadedEmbeddings, Manifest, HEADER_LEN, MAGIC,
    VERSION,
};
use std::path::Path;

fn annotate(path: &Path, e: std::io::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// `fs::read` whose error names the file.
pub(crate) fn read_file(path: &Path) -> crate::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| annotate(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> crate::Result<()> {
    std::fs::write(path, bytes).map_err(|e| annotate(path, e))
}

pub use splits::{enumerate_splits, FixedSplit, FixedSplitFile, SplitMode, SplitPlan, Trial};
