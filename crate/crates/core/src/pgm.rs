//! 8-bit binary portable graymap (P5) export, plus grid contact sheets for
//! human review. Dependency-free on purpose: any image viewer opens these.

use std::fs;
use std::path::Path;

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Write pixels in `[0, 1]` (row-major) as a P5 graymap with maxval 255.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[Real]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Dimension(format!(
            "{}×{} graymap needs {} pixels, got {}",
            width,
            height,
            width * height,
            pixels.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(pixels.iter().map(|&v| quantize(v)));
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a P5 graymap written by [`write_pgm`]. Returns (width, height, bytes).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let header_fields: Vec<&[u8]> = bytes.splitn(4, |&b| b == b'\n').collect();
    if header_fields.len() != 4 || header_fields[0] != b"P5" {
        return Err(Error::Parse(format!(
            "{}: not a P5 graymap",
            path.display()
        )));
    }
    let dims = std::str::from_utf8(header_fields[1])
        .map_err(|_| Error::Parse(format!("{}: bad dimension line", path.display())))?;
    let mut parts = dims.split_whitespace();
    let width: usize = parse_dim(parts.next(), path)?;
    let height: usize = parse_dim(parts.next(), path)?;
    if header_fields[2] != b"255" {
        return Err(Error::Parse(format!(
            "{}: expected maxval 255",
            path.display()
        )));
    }
    let payload = header_fields[3];
    if payload.len() != width * height {
        return Err(Error::Parse(format!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            payload.len(),
            width * height
        )));
    }
    Ok((width, height, payload.to_vec()))
}

/// Lay out same-sized images on a grid with 1-pixel separators. Returns
/// (sheet width, sheet height, pixels).
pub fn contact_sheet(
    images: &[&[Real]],
    width: usize,
    height: usize,
    columns: usize,
) -> Result<(usize, usize, Vec<Real>)> {
    if images.is_empty() || columns == 0 {
        return Err(Error::Parameter(
            "contact sheet needs images and columns".into(),
        ));
    }
    for tile in images {
        if tile.len() != width * height {
            return Err(Error::Dimension(format!(
                "tile has {} pixels, expected {}",
                tile.len(),
                width * height
            )));
        }
    }
    let columns = columns.min(images.len());
    let rows = images.len().div_ceil(columns);
    let sheet_w = columns * width + (columns - 1);
    let sheet_h = rows * height + (rows - 1);
    let mut pixels = vec![0.5; sheet_w * sheet_h];
    for (i, tile) in images.iter().enumerate() {
        let (gx, gy) = (i % columns, i / columns);
        let x0 = gx * (width + 1);
        let y0 = gy * (height + 1);
        for row in 0..height {
            let src = &tile[row * width..(row + 1) * width];
            let dst = (y0 + row) * sheet_w + x0;
            pixels[dst..dst + width].copy_from_slice(src);
        }
    }
    Ok((sheet_w, sheet_h, pixels))
}

pub fn quantize(v: Real) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn parse_dim(field: Option<&str>, path: &Path) -> Result<usize> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse(format!("{}: bad dimension line", path.display())))
}
