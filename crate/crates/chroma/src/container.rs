//! Colorized dataset container.
//!
//! ```text
//! "CMDS" | u16 version | u8 channels | u16 height | u16 width | u32 count
//! count × ( u8 label | channels·height·width u8 pixels, channel-major )
//! u32 CRC32 of the records
//! ```
//!
//! Integers are little-endian. Provenance lives in a JSON sidecar next to the
//! container (`<path>.json`).

use std::fs;
use std::path::{Path, PathBuf};

use chroma_core::datagen::{dataset_id, LabeledDataset, Provenance, CHANNELS, CLASSES, IMAGE_BYTES, SIDE};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 4] = b"CMDS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 2 + 2 + 4;
const RECORD_LEN: usize = 1 + IMAGE_BYTES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u16,
    pub id: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub class_counts: Vec<usize>,
    pub crc32: u32,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes via a temporary file so a failed write never leaves a container
/// that looks complete.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn encode(ds: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * RECORD_LEN + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(CHANNELS as u8);
    out.extend_from_slice(&(SIDE as u16).to_le_bytes());
    out.extend_from_slice(&(SIDE as u16).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for i in 0..ds.len() {
        out.push(ds.labels[i]);
        out.extend_from_slice(ds.image(i));
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn manifest_for(ds: &LabeledDataset, crc32: u32) -> Manifest {
    Manifest {
        format: String::from("CMDS"),
        version: VERSION,
        id: dataset_id(ds.provenance.source, ds.provenance.scheme),
        provenance: ds.provenance,
        count: ds.len(),
        channels: CHANNELS,
        height: SIDE,
        width: SIDE,
        class_counts: ds.class_counts().to_vec(),
        crc32,
    }
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<Manifest> {
    let bytes = encode(ds);
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("four bytes"));
    let manifest = manifest_for(ds, crc);
    write_atomic(path, &bytes)?;
    write_atomic(&manifest_path(path), format!("{}\n", serde_json::to_string_pretty(&manifest)?).as_bytes())?;
    Ok(manifest)
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), detail: detail.into() }
}

/// Decodes container bytes; `path` is only used in diagnostics.
pub fn decode(bytes: &[u8], provenance: Provenance, path: &Path) -> Result<LabeledDataset> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(format_err(path, format!("truncated: {} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(path, "not a CMDS container"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::Version { path: path.to_path_buf(), found: version, expected: VERSION });
    }
    let (channels, height, width) = (bytes[6] as usize, u16_at(7) as usize, u16_at(9) as usize);
    if channels != CHANNELS {
        return Err(chroma_core::Error::ChannelMismatch { expected: CHANNELS, found: channels }.into());
    }
    if height != SIDE || width != SIDE {
        return Err(format_err(path, format!("images are {height}×{width}, expected {SIDE}×{SIDE}")));
    }
    let count = u32::from_le_bytes(bytes[11..15].try_into().expect("four bytes")) as usize;
    let expected = HEADER_LEN + count * RECORD_LEN + 4;
    if bytes.len() != expected {
        return Err(format_err(path, format!("{} bytes, expected {expected} for {count} images", bytes.len())));
    }
    let records = &bytes[HEADER_LEN..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("four bytes"));
    let computed = crc32fast::hash(records);
    if stored != computed {
        return Err(Error::Checksum { path: path.to_path_buf(), stored, computed });
    }
    let mut images = Vec::with_capacity(count * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(count);
    for rec in records.chunks_exact(RECORD_LEN) {
        if rec[0] as usize >= CLASSES {
            return Err(format_err(path, format!("label {} out of range", rec[0])));
        }
        labels.push(rec[0]);
        images.extend_from_slice(&rec[1..]);
    }
    Ok(LabeledDataset::new(images, labels, provenance)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).at(&mpath)?;
    serde_json::from_str(&text).map_err(|e| format_err(&mpath, e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let manifest = read_manifest(path)?;
    let bytes = fs::read(path).at(path)?;
    let ds = decode(&bytes, manifest.provenance, path)?;
    if manifest.count != ds.len() {
        return Err(format_err(path, format!("manifest lists {} images, container holds {}", manifest.count, ds.len())));
    }
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("four bytes"));
    if manifest.crc32 != crc {
        return Err(format_err(path, "manifest checksum does not match container"));
    }
    Ok(ds)
}
