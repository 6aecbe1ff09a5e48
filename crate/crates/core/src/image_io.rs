//! Image and raw-grid file I/O.
//!
//! Rendered masks go out as 8-bit grayscale PNG with values round(255 * v).
//! Raw float dumps carry a 16-byte header (magic "GSCK", width, height,
//! reserved u32, all little-endian) followed by row-major little-endian f32.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::ScalarImage;

pub const RAW_MAGIC: &[u8; 4] = b"GSCK";

/// Quantize a scalar image to 8-bit gray and write it as PNG.
pub fn write_gray_png(path: &Path, img: &ScalarImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    image::save_buffer(path, &bytes, img.width, img.height, image::ColorType::L8)
        .map_err(|e| Error::Write(format!("{}: {e}", path.display())))
}

/// Write a boolean mask as PNG, tampered = 255, authentic = 0.
pub fn write_mask_png(path: &Path, width: u32, height: u32, labels: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().map(|&b| if b { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width, height, image::ColorType::L8)
        .map_err(|e| Error::Write(format!("{}: {e}", path.display())))
}

/// Load any supported grayscale-convertible image (PNG or PGM) to 8-bit gray.
pub fn load_gray(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (img.width(), img.height());
    Ok((w, h, img.into_raw()))
}

/// Write a raw f32 dump of a scalar image.
pub fn write_raw_dump(path: &Path, img: &ScalarImage) -> Result<()> {
    let wrap = |e: std::io::Error| Error::Write(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(wrap)?;
    let mut buf = Vec::with_capacity(16 + img.data.len() * 4);
    buf.extend_from_slice(RAW_MAGIC);
    buf.extend_from_slice(&img.width.to_le_bytes());
    buf.extend_from_slice(&img.height.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &v in &img.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    f.write_all(&buf).map_err(wrap)
}

/// Read a raw f32 dump back into a scalar image.
pub fn read_raw_dump(path: &Path) -> Result<ScalarImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Parse(format!("{}: cannot read: {e}", path.display())))?;
    if bytes.len() < 16 {
        return Err(Error::Truncation(format!("{}: shorter than header", path.display())));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(Error::Parse(format!("{}: bad magic", path.display())));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let need = 16 + (width as usize) * (height as usize) * 4;
    if bytes.len() < need {
        return Err(Error::Truncation(format!(
            "{}: {} bytes, need {need} for {width}x{height}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes[16..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(ScalarImage { width, height, data })
}
