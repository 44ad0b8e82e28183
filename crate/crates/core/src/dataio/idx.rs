//! IDX container: big-endian header `0x00 0x00 <type> <ndims>`, then `ndims` u32 sizes,
//! then the payload.
//!
//! Images are read from unsigned-byte files (magic `0x00000803`, scaled by `1/255`) or from
//! big-endian float64 files (magic `0x00000E03`, read as-is and required to lie in `[0, 1]`).
//! Labels are unsigned-byte files (magic `0x00000801`).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;
use crate::snn::LabeledBatch;

pub const IMAGES_U8_MAGIC: u32 = 0x0000_0803;
pub const IMAGES_F64_MAGIC: u32 = 0x0000_0E03;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(
                self.pos,
                format!(
                    "truncated file: need {n} bytes for {what}, {} remain",
                    self.bytes.len() - self.pos
                ),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pixel rows in `[0, 1]`, one row per image.
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = read(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.u32("magic number")?;
    if magic != IMAGES_U8_MAGIC && magic != IMAGES_F64_MAGIC {
        return Err(cur.err(
            0,
            format!("bad image magic 0x{magic:08X}, expected 0x{IMAGES_U8_MAGIC:08X} or 0x{IMAGES_F64_MAGIC:08X}"),
        ));
    }
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let pixels = rows * cols;
    if pixels == 0 {
        return Err(cur.err(8, "image dimensions must be non-zero"));
    }
    let mut data = Vec::with_capacity(count * pixels);
    if magic == IMAGES_U8_MAGIC {
        let payload = cur.take(count * pixels, "pixel data")?;
        data.extend(payload.iter().map(|&b| f64::from(b) / 255.0));
    } else {
        let start = cur.pos;
        let payload = cur.take(count * pixels * 8, "pixel data")?;
        for (i, c) in payload.chunks_exact(8).enumerate() {
            let v = f64::from_be_bytes(c.try_into().expect("8-byte chunk"));
            if !(0.0..=1.0).contains(&v) {
                return Err(cur.err(start + 8 * i, format!("pixel value {v} outside [0, 1]")));
            }
            data.push(v);
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.err(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if count == 0 {
        return Ok(Matrix::zeros(0, pixels));
    }
    Matrix::new(count, pixels, data)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.u32("magic number")?;
    if magic != LABELS_MAGIC {
        return Err(cur.err(
            0,
            format!("bad label magic 0x{magic:08X}, expected 0x{LABELS_MAGIC:08X}"),
        ));
    }
    let count = cur.u32("label count")? as usize;
    let payload = cur.take(count, "label data")?;
    if cur.pos != bytes.len() {
        return Err(cur.err(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledBatch> {
    let x = read_idx_images(images)?;
    let y = read_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(Error::Parse {
            path: labels.to_path_buf(),
            offset: 4,
            message: format!(
                "{} labels for {} images in {}",
                y.len(),
                x.rows(),
                images.display()
            ),
        });
    }
    LabeledBatch::new(x, y)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn image_header(magic: u32, count: usize, side: (usize, usize)) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [magic, count as u32, side.0 as u32, side.1 as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Writes unsigned-byte images, rounding `v * 255` to the nearest level.
pub fn write_idx_images_u8(path: &Path, x: &Matrix, side: (usize, usize)) -> Result<()> {
    check_side(x, side)?;
    let mut out = image_header(IMAGES_U8_MAGIC, x.rows(), side);
    out.extend(
        x.data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    write(path, &out)
}

/// Writes lossless big-endian float64 images.
pub fn write_idx_images_f64(path: &Path, x: &Matrix, side: (usize, usize)) -> Result<()> {
    check_side(x, side)?;
    let mut out = image_header(IMAGES_F64_MAGIC, x.rows(), side);
    for v in x.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    write(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        let b = u8::try_from(y).map_err(|_| Error::invalid(format!("label {y} exceeds 255")))?;
        out.push(b);
    }
    write(path, &out)
}

fn check_side(x: &Matrix, side: (usize, usize)) -> Result<()> {
    if side.0 * side.1 != x.cols() {
        return Err(Error::invalid(format!(
            "{}x{} images do not match {} columns",
            side.0,
            side.1,
            x.cols()
        )));
    }
    Ok(())
}

/// Square side length for a pixel count, falling back to a single row.
pub fn image_side(pixels: usize) -> (usize, usize) {
    let s = (pixels as f64).sqrt().round() as usize;
    if s * s == pixels {
        (s, s)
    } else {
        (1, pixels)
    }
}
