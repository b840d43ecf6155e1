//! IDX file parsing (the MNIST container format) and per-class tensor assembly.
//!
//! Image files start with magic `0x00000803` followed by three big-endian
//! `u32` dimensions (count, rows, cols) and `count * rows * cols` unsigned
//! bytes, row-major. Label files start with `0x00000801`, a big-endian count,
//! and one byte per label. Either may be gzip-wrapped.
//!
//! Images become lateral slices: pixel `(r, c)` of an image lands at
//! `(r, slot, c)` of its class tensor, so image columns run along the tubes.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, IdxError, Result};
use crate::tensor::Tensor3;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Raw decoded IDX image payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn gunzip_if_needed(bytes: &[u8]) -> std::result::Result<std::borrow::Cow<'_, [u8]>, IdxError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| IdxError::Gzip(e.to_string()))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or(IdxError::Truncated {
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> std::result::Result<(), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> std::result::Result<&[u8], IdxError> {
    let available = bytes.len() - offset;
    if available < len {
        return Err(IdxError::Truncated {
            offset: bytes.len(),
            needed: len,
            available,
        });
    }
    if available > len {
        return Err(IdxError::TrailingData {
            extra: available - len,
        });
    }
    Ok(&bytes[offset..])
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    let bytes = gunzip_if_needed(bytes)?;
    check_magic(&bytes, IMAGE_MAGIC)?;
    let count = be_u32(&bytes, 4)? as usize;
    let rows = be_u32(&bytes, 8)? as usize;
    let cols = be_u32(&bytes, 12)? as usize;
    let pixels = payload(&bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let bytes = gunzip_if_needed(bytes)?;
    check_magic(&bytes, LABEL_MAGIC)?;
    let count = be_u32(&bytes, 4)? as usize;
    let labels = payload(&bytes, 8, count)?;
    if let Some(index) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(IdxError::InvalidLabel {
            index,
            value: labels[index],
        });
    }
    Ok(labels.to_vec())
}

/// Pixel scaling applied when images become tensor entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw byte values.
    None,
    /// Bytes divided by 255.
    #[default]
    Unit,
}

impl Normalization {
    pub fn scale(self) -> f64 {
        match self {
            Normalization::None => 1.0,
            Normalization::Unit => 1.0 / 255.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::Unit => "unit",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "unit" => Ok(Normalization::Unit),
            other => Err(format!("unknown normalization {other:?} (expected none or unit)")),
        }
    }
}

/// Labelled grayscale images of identical size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> std::result::Result<Self, IdxError> {
        if images.count != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.count,
                labels: labels.len(),
            });
        }
        if let Some(index) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(IdxError::InvalidLabel {
                index,
                value: labels[index],
            });
        }
        Ok(ImageSet {
            rows: images.rows,
            cols: images.cols,
            pixels: images.pixels,
            labels,
        })
    }

    /// Reads an image file and a label file (raw or gzip).
    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
        let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
        Ok(ImageSet::new(parse_idx_images(&img)?, parse_idx_labels(&lab)?)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[index * size..(index + 1) * size]
    }

    /// Per-class image counts.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// The first `count` images, for quick experiments.
    pub fn head(&self, count: usize) -> ImageSet {
        let count = count.min(self.len());
        ImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..count * self.rows * self.cols].to_vec(),
            labels: self.labels[..count].to_vec(),
        }
    }
}

/// Training or test images grouped by class, each class as one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPartition {
    tensors: Vec<Option<Tensor3>>,
    origins: Vec<Vec<usize>>,
    scale: f64,
}

impl ClassPartition {
    /// Wraps ready-made class tensors; origins number the slices class by class.
    pub fn from_tensors(tensors: Vec<Tensor3>) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::Shape("partition needs at least one class".into()))?
            .dims();
        let mut origins = Vec::with_capacity(tensors.len());
        let mut next = 0;
        for t in &tensors {
            let d = t.dims();
            if d.ell != first.ell || d.n != first.n {
                return Err(Error::DimensionMismatch(format!(
                    "class tensor {d} does not share ell/n with {first}"
                )));
            }
            origins.push((next..next + d.m).collect());
            next += d.m;
        }
        Ok(ClassPartition {
            tensors: tensors.into_iter().map(Some).collect(),
            origins,
            scale: 1.0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.tensors.len()
    }

    pub fn class(&self, label: usize) -> Option<&Tensor3> {
        self.tensors.get(label).and_then(Option::as_ref)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.origins.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.origins.iter().map(Vec::len).sum()
    }

    /// Source index (position in the image file) of every lateral slice, per class.
    pub fn origins(&self) -> &[Vec<usize>] {
        &self.origins
    }

    /// Multiplier applied to raw pixels.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `(ell, n)` shared by every class tensor.
    pub fn slice_shape(&self) -> Option<(usize, usize)> {
        self.tensors
            .iter()
            .flatten()
            .next()
            .map(|t| (t.dims().ell, t.dims().n))
    }

    /// Every image as `(label, lateral slice)`, class by class, in file order within a class.
    pub fn samples(&self) -> impl Iterator<Item = (usize, usize, Tensor3)> + '_ {
        self.tensors.iter().enumerate().flat_map(|(label, t)| {
            t.iter().flat_map(move |t| {
                (0..t.dims().m).map(move |j| (label, j, t.lateral_slice(j)))
            })
        })
    }
}

/// Groups images by label; image `j` of class `i` becomes lateral slice `j` of tensor `i`.
pub fn build_class_partition(images: &ImageSet, normalization: Normalization) -> ClassPartition {
    let scale = normalization.scale();
    let (rows, cols) = (images.rows, images.cols);
    let mut origins = vec![Vec::new(); NUM_CLASSES];
    for (idx, &label) in images.labels.iter().enumerate() {
        origins[label as usize].push(idx);
    }
    let tensors = origins
        .iter()
        .map(|members| {
            if members.is_empty() || rows == 0 || cols == 0 {
                return None;
            }
            let t = Tensor3::from_fn(rows, members.len(), cols, |r, slot, c| {
                images.image(members[slot])[r * cols + c] as f64 * scale
            })
            .expect("pixel values are finite");
            Some(t)
        })
        .collect();
    ClassPartition {
        tensors,
        origins,
        scale,
    }
}
