//! MNIST IDX files (big-endian).

use std::path::{Path, PathBuf};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.at;
        if n > available {
            return Err(Error::Truncated {
                needed: self.at + n,
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<()> {
        match self.bytes.len() - self.at {
            0 => Ok(()),
            count => Err(Error::TrailingBytes { count }),
        }
    }
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic {
            expected: format!("{expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

/// Images as `rows × cols × 1` tensors with pixels scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut c = Cursor { bytes, at: 0 };
    check_magic(c.u32()?, IMAGE_MAGIC)?;
    let count = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidShape {
            shape: vec![count, rows, cols],
            len: bytes.len(),
        });
    }
    let pixels = rows * cols;
    let needed = count
        .checked_mul(pixels)
        .ok_or_else(|| Error::InvalidArgument("IDX dimensions overflow".into()))?;
    let body = c.take(needed)?;
    c.finish()?;
    Ok(body
        .chunks_exact(pixels)
        .map(|img| {
            let data = img.iter().map(|&p| f64::from(p) / 255.0).collect();
            Tensor::from_parts(vec![rows, cols, 1], data)
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut c = Cursor { bytes, at: 0 };
    check_magic(c.u32()?, LABEL_MAGIC)?;
    let count = c.u32()? as usize;
    let body = c.take(count)?;
    c.finish()?;
    Ok(body.iter().map(|&l| l as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a matching image/label file pair.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let images = parse_idx_images(&read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels_path.as_ref())?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let shape = images
        .first()
        .map(|t| t.shape().to_vec())
        .unwrap_or_else(|| vec![28, 28, 1]);
    LabeledDataset::new(shape, images, labels, CLASSES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn files(self, dir: &Path) -> (PathBuf, PathBuf) {
        let prefix = match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        };
        (
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
        )
    }
}

/// Loads one split from a directory laid out like the MNIST distribution.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> Result<LabeledDataset> {
    let (images, labels) = split.files(dir.as_ref());
    load_idx(images, labels)
}
