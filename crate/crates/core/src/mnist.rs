//! IDX ingestion and the digit-strip parity task.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::BatchSource;
use crate::error::{invalid, Error, Result};
use crate::rng::LabRng;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const DIGIT_SIDE: usize = 28;

/// A raw unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Bytes scaled to `[0, 1]` by `/255`.
    pub fn scaled(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / 255.0).collect()
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

/// Parse an unsigned-byte IDX file: a big-endian magic `0x000008DD` where
/// `DD` is the number of dimensions, `DD` big-endian `u32` sizes, then the
/// data.
pub fn parse_idx_bytes(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(parse_err(bytes.len(), "file ends inside the 4-byte magic"));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_err(0, format!("bad magic {magic:#010x}: leading bytes must be zero")));
    }
    if bytes[2] != 0x08 {
        return Err(parse_err(2, format!("unsupported element type {:#04x}, expected 0x08 (unsigned byte)", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(parse_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(parse_err(bytes.len(), format!("file ends inside the header, expected {header} header bytes")));
    }
    let mut dims = Vec::with_capacity(ndims);
    let mut total: usize = 1;
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let size = u32::from_be_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as usize;
        total = total.checked_mul(size).ok_or_else(|| parse_err(off, "dimension product overflows"))?;
        dims.push(size);
    }
    let expected = header.checked_add(total).ok_or_else(|| parse_err(header, "file length overflows"))?;
    if bytes.len() < expected {
        return Err(parse_err(
            bytes.len(),
            format!("truncated: expected {expected} bytes for dims {dims:?}, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(parse_err(expected, format!("{} trailing bytes after the data", bytes.len() - expected)));
    }
    Ok(IdxTensor { magic, dims, data: bytes[header..].to_vec() })
}

pub fn parse_idx(path: &Path) -> Result<IdxTensor> {
    parse_idx_bytes(&std::fs::read(path)?)
}

/// A split of the digit dataset: `count` images of `28 × 28` bytes and
/// their digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitSplit {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl DigitSplit {
    pub fn from_tensors(images: IdxTensor, labels: IdxTensor) -> Result<Self> {
        if images.magic != IMAGES_MAGIC {
            return Err(parse_err(0, format!("image file magic {:#010x}, expected {IMAGES_MAGIC:#010x}", images.magic)));
        }
        if labels.magic != LABELS_MAGIC {
            return Err(parse_err(0, format!("label file magic {:#010x}, expected {LABELS_MAGIC:#010x}", labels.magic)));
        }
        if images.dims[0] != labels.dims[0] {
            return Err(invalid(format!("{} images but {} labels", images.dims[0], labels.dims[0])));
        }
        if let Some(pos) = labels.data.iter().position(|&d| d > 9) {
            return Err(parse_err(8 + pos, format!("label {} is not a digit", labels.data[pos])));
        }
        Ok(Self { rows: images.dims[1], cols: images.dims[2], images: images.data, labels: labels.data })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Self::from_tensors(parse_idx(images)?, parse_idx(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn pixel(&self, image: usize, r: usize, c: usize) -> u8 {
        self.images[image * self.rows * self.cols + r * self.cols + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// `+1` iff the digits sum to an even number.
pub fn strip_label(digits: &[u8]) -> f64 {
    if digits.iter().map(|&d| d as u32).sum::<u32>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Strips of `k` digits placed side by side, each drawn uniformly with
/// replacement from one split. Pixels are assembled on demand.
#[derive(Debug, Clone)]
pub struct MnistStripDataset {
    pub source: Arc<DigitSplit>,
    pub split: Split,
    pub k: usize,
    /// `count × k` source indices, row-major.
    pub members: Vec<usize>,
    pub labels: Vec<f64>,
}

impl MnistStripDataset {
    pub fn width(&self) -> usize {
        self.source.cols * self.k
    }

    pub fn digits(&self, strip: usize) -> Vec<u8> {
        self.members[strip * self.k..(strip + 1) * self.k].iter().map(|&i| self.source.labels[i]).collect()
    }

    /// Pixels of one strip, row-major over `rows × (cols·k)`, in `[0, 1]`.
    pub fn strip(&self, strip: usize) -> Vec<f64> {
        let (rows, cols) = (self.source.rows, self.source.cols);
        let parts = &self.members[strip * self.k..(strip + 1) * self.k];
        let mut out = Vec::with_capacity(rows * cols * self.k);
        for r in 0..rows {
            for &img in parts {
                out.extend((0..cols).map(|c| self.source.pixel(img, r, c) as f64 / 255.0));
            }
        }
        out
    }
}

impl BatchSource for MnistStripDataset {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.source.rows * self.width()
    }

    fn batch(&self, indices: &[usize]) -> (Array2<f64>, Vec<f64>) {
        let d = self.dim();
        let mut xs = Array2::zeros((indices.len(), d));
        for (mut row, &i) in xs.rows_mut().into_iter().zip(indices) {
            row.assign(&ndarray::ArrayView1::from(&self.strip(i)));
        }
        (xs, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

pub fn build_strips(source: Arc<DigitSplit>, split: Split, k: usize, count: usize, rng: &mut LabRng) -> Result<MnistStripDataset> {
    if k == 0 {
        return Err(invalid("strips need at least one digit"));
    }
    if source.is_empty() {
        return Err(invalid("empty source split"));
    }
    let members: Vec<usize> = (0..count * k).map(|_| rng.random_range(0..source.len())).collect();
    let labels = members
        .chunks(k)
        .map(|c| strip_label(&c.iter().map(|&i| source.labels[i]).collect::<Vec<_>>()))
        .collect();
    Ok(MnistStripDataset { source, split, k, members, labels })
}

/// Encode an unsigned-byte IDX tensor (used for fixtures).
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}
