//! Colorized MNIST-style datasets.
//!
//! Raw 28×28 grayscale digits are zero-padded to 32×32 and rendered into RGB
//! by one of three schemes. Every scheme writes each source pixel into exactly
//! one channel, so the per-pixel channel sum always equals the source value.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Rng;

pub const SOURCE_SIDE: usize = 28;
pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PLANE: usize = SIDE * SIDE;
pub const IMAGE_BYTES: usize = CHANNELS * PLANE;
pub const CLASSES: usize = 10;
/// Trailing training images held out for model selection.
pub const VALIDATION_SIZE: usize = 5000;
/// Band boundaries for the three-band scheme; the remainder goes to the last band.
pub const BANDS: [Range<usize>; 3] = [0..11, 11..22, 22..32];

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const PAD: usize = (SIDE - SOURCE_SIDE) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mnist,
    #[serde(rename = "fashionmnist")]
    FashionMnist,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Mnist => "mnist",
            Source::FashionMnist => "fashionmnist",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mnist" => Some(Source::Mnist),
            "fashionmnist" => Some(Source::FashionMnist),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            Source::Mnist => 'M',
            Source::FashionMnist => 'F',
        }
    }
}

/// Which IDX file a raw set was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdxFile {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    /// The IDX file this split is carved from.
    pub fn file(self) -> IdxFile {
        match self {
            Split::Train | Split::Val => IdxFile::Train,
            Split::Test => IdxFile::Test,
        }
    }

    /// Indices of this split within its IDX file of `len` images.
    pub fn range(self, len: usize) -> Result<Range<usize>> {
        match self {
            Split::Test => Ok(0..len),
            _ if len <= VALIDATION_SIZE => Err(Error::Config(format!(
                "training file has {len} images, need more than {VALIDATION_SIZE} for a validation split"
            ))),
            Split::Train => Ok(0..len - VALIDATION_SIZE),
            Split::Val => Ok(len - VALIDATION_SIZE..len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorScheme {
    GreenOnly,
    RandomSingleChannel,
    HorizontalThirds,
}

impl ColorScheme {
    pub const ALL: [ColorScheme; 3] =
        [ColorScheme::GreenOnly, ColorScheme::RandomSingleChannel, ColorScheme::HorizontalThirds];

    /// Command-line spelling.
    pub fn short_name(self) -> &'static str {
        match self {
            ColorScheme::GreenOnly => "green",
            ColorScheme::RandomSingleChannel => "single",
            ColorScheme::HorizontalThirds => "thirds",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.short_name() == s)
    }

    /// 1-based position used in dataset and model ids.
    pub fn index(self) -> usize {
        match self {
            ColorScheme::GreenOnly => 1,
            ColorScheme::RandomSingleChannel => 2,
            ColorScheme::HorizontalThirds => 3,
        }
    }
}

/// Orientation of the three bands in [`ColorScheme::HorizontalThirds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandLayout {
    /// Top, middle and bottom strips.
    #[default]
    Rows,
    /// Left, middle and right strips.
    Columns,
}

/// `MD1` .. `MD3` for MNIST, `FD1` .. `FD3` for FashionMNIST.
pub fn dataset_id(source: Source, scheme: ColorScheme) -> String {
    format!("{}D{}", source.letter(), scheme.index())
}

/// `MM1` .. `MM3` / `FM1` .. `FM3`: the model trained on the matching dataset.
pub fn model_id(source: Source, scheme: ColorScheme) -> String {
    format!("{}M{}", source.letter(), scheme.index())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub split: Split,
    pub scheme: ColorScheme,
    pub seed: u64,
    #[serde(default)]
    pub bands: BandLayout,
}

/// Grayscale images and labels as read from a pair of IDX files.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSplit {
    pub file: IdxFile,
    /// `count` row-major 28×28 images back to back.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = SOURCE_SIDE * SOURCE_SIDE;
        &self.pixels[i * n..(i + 1) * n]
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let (head, rest) = self
            .bytes
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::Format(format!("{} file truncated in header", self.what)))?;
        self.bytes = rest;
        Ok(u32::from_be_bytes(*head))
    }

    fn payload(&self, len: usize) -> Result<&'a [u8]> {
        match self.bytes.len() {
            n if n < len => Err(Error::Format(format!("{} file truncated: {n} of {len} payload bytes", self.what))),
            n if n > len => Err(Error::Format(format!("{} file has {} trailing bytes", self.what, n - len))),
            _ => Ok(self.bytes),
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32()?;
        if magic != expected {
            return Err(Error::Format(format!("{} file has magic {magic:#010x}, expected {expected:#010x}", self.what)));
        }
        Ok(())
    }
}

/// Parses an IDX image file, returning `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = Reader { bytes, what: "image" };
    r.magic(IMAGE_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.payload(count * rows * cols)?;
    Ok((count, rows, cols, pixels.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, what: "label" };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.payload(count)?.to_vec())
}

/// Parses and cross-checks an image/label IDX pair of 28×28 digits.
pub fn parse_idx(images: &[u8], labels: &[u8], file: IdxFile) -> Result<RawSplit> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    if rows != SOURCE_SIDE || cols != SOURCE_SIDE {
        return Err(Error::Format(format!("images are {rows}×{cols}, expected {SOURCE_SIDE}×{SOURCE_SIDE}")));
    }
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::Format(format!("{count} images but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::LabelOutOfRange { label: bad as usize, classes: CLASSES });
    }
    Ok(RawSplit { file, pixels, labels })
}

fn check_len(img: &[u8], expected: usize, op: &'static str) -> Result<()> {
    if img.len() != expected {
        return Err(Error::Dimension { op, detail: format!("expected {expected} pixels, got {}", img.len()) });
    }
    Ok(())
}

/// Zero-pads a 28×28 image by two pixels on every side.
pub fn pad_to_32(img: &[u8]) -> Result<Vec<u8>> {
    check_len(img, SOURCE_SIDE * SOURCE_SIDE, "pad_to_32")?;
    let mut out = vec![0u8; PLANE];
    for (r, row) in img.chunks_exact(SOURCE_SIDE).enumerate() {
        let start = (r + PAD) * SIDE + PAD;
        out[start..start + SOURCE_SIDE].copy_from_slice(row);
    }
    Ok(out)
}

/// Copies the 32×32 plane into channel `channel`, leaving the others zero.
pub fn colorize_single(img: &[u8], channel: usize) -> Result<Vec<u8>> {
    check_len(img, PLANE, "colorize")?;
    assert!(channel < CHANNELS, "channel {channel} out of range");
    let mut out = vec![0u8; IMAGE_BYTES];
    out[channel * PLANE..(channel + 1) * PLANE].copy_from_slice(img);
    Ok(out)
}

/// Intensities in the green channel.
pub fn colorize_green(img: &[u8]) -> Result<Vec<u8>> {
    colorize_single(img, 1)
}

/// Intensities in one uniformly chosen channel.
pub fn colorize_single_random(img: &[u8], rng: &mut Rng) -> Result<Vec<u8>> {
    colorize_single(img, rng.below(CHANNELS as u64) as usize)
}

/// Band `i` goes to channel `perm[i]`.
pub fn colorize_thirds(img: &[u8], perm: [usize; 3], layout: BandLayout) -> Result<Vec<u8>> {
    check_len(img, PLANE, "colorize")?;
    let mut out = vec![0u8; IMAGE_BYTES];
    for (band, &channel) in BANDS.iter().zip(&perm) {
        assert!(channel < CHANNELS, "channel {channel} out of range");
        let plane = &mut out[channel * PLANE..(channel + 1) * PLANE];
        match layout {
            BandLayout::Rows => {
                let span = band.start * SIDE..band.end * SIDE;
                plane[span.clone()].copy_from_slice(&img[span]);
            }
            BandLayout::Columns => {
                for r in 0..SIDE {
                    let span = r * SIDE + band.start..r * SIDE + band.end;
                    plane[span.clone()].copy_from_slice(&img[span]);
                }
            }
        }
    }
    Ok(out)
}

/// Three bands in a uniformly random permutation of the channels.
pub fn colorize_thirds_random(img: &[u8], rng: &mut Rng, layout: BandLayout) -> Result<Vec<u8>> {
    colorize_thirds(img, rng.permutation3(), layout)
}

/// Stream id of image `index` of `file`, so train and test images never share
/// a stream and a given image colorizes identically in every split.
pub fn image_stream(file: IdxFile, index: usize) -> u64 {
    let tag = match file {
        IdxFile::Train => 0u64,
        IdxFile::Test => 1,
    };
    (tag << 32) | index as u64
}

/// Pads and colorizes one source image with its own generator.
pub fn colorize_image(src: &[u8], scheme: ColorScheme, layout: BandLayout, rng: &mut Rng) -> Result<Vec<u8>> {
    let padded = pad_to_32(src)?;
    match scheme {
        ColorScheme::GreenOnly => colorize_green(&padded),
        ColorScheme::RandomSingleChannel => colorize_single_random(&padded, rng),
        ColorScheme::HorizontalThirds => colorize_thirds_random(&padded, rng, layout),
    }
}

/// Colorized `[3, 32, 32]` u8 images with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// Channel-major images back to back.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_BYTES {
            return Err(Error::Format(format!(
                "{} image bytes do not hold {} images of {IMAGE_BYTES} bytes",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::LabelOutOfRange { label: bad as usize, classes: CLASSES });
        }
        Ok(Self { images, labels, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    /// The first `n` images (all of them if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n * IMAGE_BYTES].to_vec(),
            labels: self.labels[..n].to_vec(),
            provenance: self.provenance,
        }
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Builds one split of a colorized dataset from the IDX file it is carved from.
pub fn build_dataset(
    source: Source,
    raw: &RawSplit,
    split: Split,
    scheme: ColorScheme,
    seed: u64,
    layout: BandLayout,
) -> Result<LabeledDataset> {
    if raw.file != split.file() {
        return Err(Error::Config(format!("{} split cannot be built from the {:?} file", split.name(), raw.file)));
    }
    let range = split.range(raw.len())?;
    let mut images = Vec::with_capacity(range.len() * IMAGE_BYTES);
    for i in range.clone() {
        let mut rng = Rng::for_stream(seed, image_stream(raw.file, i));
        images.extend_from_slice(&colorize_image(raw.image(i), scheme, layout, &mut rng)?);
    }
    LabeledDataset::new(
        images,
        raw.labels[range].to_vec(),
        Provenance { source, split, scheme, seed, bands: layout },
    )
}

/// Channels holding at least one nonzero byte of a `[3, 32, 32]` image.
pub fn active_channels(img: &[u8]) -> [bool; CHANNELS] {
    let mut on = [false; CHANNELS];
    for (c, plane) in img.chunks_exact(PLANE).enumerate() {
        on[c] = plane.iter().any(|&v| v != 0);
    }
    on
}

/// Pearson chi-square statistic and degrees of freedom of a contingency table
/// under independence. Rows or columns that sum to zero are dropped.
pub fn chi_square(table: &[Vec<u64>]) -> Result<(f64, usize)> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(String::from("ragged contingency table")));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let total: f64 = row_sums.iter().sum();
    let live_rows = row_sums.iter().filter(|&&s| s > 0.0).count();
    let live_cols = col_sums.iter().filter(|&&s| s > 0.0).count();
    if live_rows < 2 || live_cols < 2 {
        return Err(Error::Config(String::from("contingency table needs two nonempty rows and columns")));
    }
    let mut stat = 0.0;
    for (row, &rs) in table.iter().zip(&row_sums) {
        for (&obs, &cs) in row.iter().zip(&col_sums) {
            if rs > 0.0 && cs > 0.0 {
                let expected = rs * cs / total;
                let d = obs as f64 - expected;
                stat += d * d / expected;
            }
        }
    }
    Ok((stat, (live_rows - 1) * (live_cols - 1)))
}
