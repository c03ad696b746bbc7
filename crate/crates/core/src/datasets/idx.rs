//! IDX image/label files, bit-exact with the published MNIST layout:
//! big-endian 32-bit magic (0x00000803 for images, 0x00000801 for labels),
//! big-endian dimension sizes, then raw unsigned bytes.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Load an IDX image file and its companion label file. Pixels are scaled
/// from the byte range onto `[0, 1]`; the class count is the largest label
/// plus one.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<LabeledDataset> {
    let image_bytes = fs::read(image_path)?;
    let label_bytes = fs::read(label_path)?;

    let mut r = Reader::new(&image_bytes, image_path);
    let magic = r.u32()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            image_path.display()
        )));
    }
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.take(count * rows * cols)?;
    r.finish()?;

    let mut r = Reader::new(&label_bytes, label_path);
    let magic = r.u32()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            label_path.display()
        )));
    }
    let label_count = r.u32()? as usize;
    if label_count != count {
        return Err(Error::Parse(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let raw_labels = r.take(count)?;
    r.finish()?;

    let mut images = Tensor::zeros(vec![count, rows, cols, 1]);
    for (out, &byte) in images.data_mut().iter_mut().zip(pixels) {
        *out = Real::from(byte) / 255.0;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    LabeledDataset::new(images, labels, num_classes)
}

/// Write a dataset as an IDX image/label pair. Pixels are quantized back to
/// bytes by rounding, so a dataset that came from [`load_idx`] round-trips
/// bit-exactly.
pub fn write_idx(dataset: &LabeledDataset, image_path: &Path, label_path: &Path) -> Result<()> {
    if dataset.channels() != 1 {
        return Err(Error::Parameter(
            "IDX export supports single-channel images only".into(),
        ));
    }
    let mut image_bytes = Vec::with_capacity(16 + dataset.len() * dataset.input_dim());
    image_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(dataset.height() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(dataset.width() as u32).to_be_bytes());
    for &v in dataset.images().data() {
        image_bytes.push((v * 255.0).round() as u8);
    }

    let mut label_bytes = Vec::with_capacity(8 + dataset.len());
    label_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    label_bytes.extend(dataset.labels().iter().map(|&l| l as u8));

    fs::write(image_path, image_bytes)?;
    fs::write(label_path, label_bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self {
            bytes,
            pos: 0,
            path,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: truncated payload (needed {n} bytes at offset {})",
                self.path.display(),
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
