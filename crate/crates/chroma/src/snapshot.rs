//! Trained model snapshot file.
//!
//! ```text
//! "CMSN" | u16 version | u32 manifest length | JSON manifest
//! u32 tensor count
//! count × ( u32 name length | name | u32 rank | rank × u32 dim | f32 payload )
//! u32 CRC32 of everything before it
//! ```
//!
//! Integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chroma_core::datagen::Provenance;
use chroma_core::model::ModelConfig;
use chroma_core::train::{EpochRecord, ModelSnapshot, TrainConfig};
use chroma_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 4] = b"CMSN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    /// Display id such as `MM1` or `MM1-layer`.
    pub id: String,
    /// The dataset the model was trained on.
    pub train_data: Option<Provenance>,
    pub parameter_count: usize,
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub best_val_accuracy: f64,
    pub epoch_of_best: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub id: String,
    pub train_data: Option<Provenance>,
    pub snapshot: ModelSnapshot,
}

pub fn encode(file: &SnapshotFile) -> Result<Vec<u8>> {
    let s = &file.snapshot;
    let manifest = SnapshotManifest {
        id: file.id.clone(),
        train_data: file.train_data,
        parameter_count: s.config.parameter_count(),
        config: s.config.clone(),
        train_config: s.train_config.clone(),
        best_val_accuracy: s.best_val_accuracy,
        epoch_of_best: s.epoch_of_best,
        history: s.history.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(s.state.len() as u32).to_le_bytes());
    for (name, t) in &s.state {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format { path: self.path.to_path_buf(), detail: String::from("truncated snapshot") });
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<SnapshotFile> {
    let format_err = |detail: String| Error::Format { path: path.to_path_buf(), detail };
    if bytes.len() < 4 + 2 + 4 + 4 + 4 {
        return Err(format_err(String::from("truncated snapshot")));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(String::from("not a CMSN snapshot")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Version { path: path.to_path_buf(), found: version, expected: VERSION });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { path: path.to_path_buf(), stored, computed });
    }
    let mut cur = Cursor { bytes: &body[6..], path };
    let mlen = cur.u32()? as usize;
    let manifest: SnapshotManifest =
        serde_json::from_slice(cur.take(mlen)?).map_err(|e| format_err(format!("manifest: {e}")))?;
    let count = cur.u32()? as usize;
    let mut state = BTreeMap::new();
    for _ in 0..count {
        let nlen = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(nlen)?.to_vec()).map_err(|_| format_err(String::from("tensor name is not UTF-8")))?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = cur.take(numel * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
        state.insert(name, Tensor::new(shape, data)?);
    }
    if !cur.bytes.is_empty() {
        return Err(format_err(format!("{} unexpected trailing bytes", cur.bytes.len())));
    }
    let snapshot = ModelSnapshot {
        config: manifest.config,
        train_config: manifest.train_config,
        state,
        best_val_accuracy: manifest.best_val_accuracy,
        epoch_of_best: manifest.epoch_of_best,
        history: manifest.history,
    };
    // Reject snapshots whose tensors do not fit their own configuration.
    snapshot.model()?;
    Ok(SnapshotFile { id: manifest.id, train_data: manifest.train_data, snapshot })
}

pub fn write_snapshot(file: &SnapshotFile, path: &Path) -> Result<()> {
    write_atomic(path, &encode(file)?)
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotFile> {
    decode(&fs::read(path).at(path)?, path)
}
