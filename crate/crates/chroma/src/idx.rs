//! Raw IDX files laid out as `<data dir>/<source>/{train,t10k}-{images-idx3,labels-idx1}-ubyte`.

use std::fs;
use std::path::{Path, PathBuf};

use chroma_core::datagen::{parse_idx, IdxFile, RawSplit, Source};

use crate::error::{Error, IoContext, Result};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "CHROMA_DATA_DIR";

/// `$CHROMA_DATA_DIR`, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

pub fn idx_paths(dir: &Path, source: Source, file: IdxFile) -> (PathBuf, PathBuf) {
    let stem = match file {
        IdxFile::Train => "train",
        IdxFile::Test => "t10k",
    };
    let base = dir.join(source.name());
    (base.join(format!("{stem}-images-idx3-ubyte")), base.join(format!("{stem}-labels-idx1-ubyte")))
}

pub fn read_idx(images: &Path, labels: &Path, file: IdxFile) -> Result<RawSplit> {
    let img = fs::read(images).at(images)?;
    let lab = fs::read(labels).at(labels)?;
    parse_idx(&img, &lab, file).map_err(|e| match e {
        chroma_core::Error::Format(detail) => Error::Format { path: images.to_path_buf(), detail },
        other => other.into(),
    })
}

pub fn load_source(dir: &Path, source: Source, file: IdxFile) -> Result<RawSplit> {
    let (images, labels) = idx_paths(dir, source, file);
    read_idx(&images, &labels, file)
}
