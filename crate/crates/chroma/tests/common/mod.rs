#![allow(dead_code)]

use std::path::PathBuf;

use chroma::idx::{idx_paths, DATA_DIR_ENV};
use chroma_core::datagen::{IdxFile, Source};

/// `$CHROMA_DATA_DIR`, else the workspace `data/` directory.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

/// The data directory if every IDX file of `source` is present.
pub fn source_dir(source: Source) -> Option<PathBuf> {
    let dir = data_dir();
    let present = [IdxFile::Train, IdxFile::Test].into_iter().all(|f| {
        let (i, l) = idx_paths(&dir, source, f);
        i.is_file() && l.is_file()
    });
    if !present {
        eprintln!("skipping: {} IDX files not found under {} (run scripts/fetch_data.sh)", source.name(), dir.display());
    }
    present.then_some(dir)
}
