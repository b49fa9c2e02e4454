//! PNG images and raw little-endian tensor dumps.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Rgb, RgbImage};

use crate::error::{NfcError, Result};
use crate::grid::{ImageTensor, Shape};

pub const RAW_MAGIC: &[u8; 4] = b"NFCT";
const HEADER_LEN: usize = 16;

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> NfcError {
    move |source| NfcError::Io { context, source }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a 1- or 3-channel tensor as 8-bit PNG bytes, clamping to `[0, 1]`.
pub fn encode_png(x: &ImageTensor) -> Result<Vec<u8>> {
    let (h, w) = (x.height() as u32, x.width() as u32);
    let mut out = std::io::Cursor::new(Vec::new());
    let res = match x.channels() {
        1 => GrayImage::from_fn(w, h, |c, r| image::Luma([to_u8(x.get(0, r as usize, c as usize))]))
            .write_to(&mut out, image::ImageFormat::Png),
        3 => {
            let img: RgbImage = ImageBuffer::from_fn(w, h, |c, r| {
                let (r, c) = (r as usize, c as usize);
                Rgb([to_u8(x.get(0, r, c)), to_u8(x.get(1, r, c)), to_u8(x.get(2, r, c))])
            });
            img.write_to(&mut out, image::ImageFormat::Png)
        }
        n => {
            return Err(NfcError::InvalidShape(format!(
                "PNG output needs 1 or 3 channels, got {n}"
            )))
        }
    };
    res.map_err(|e| NfcError::Format {
        context: "encoding PNG".into(),
        message: e.to_string(),
    })?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, x: &ImageTensor) -> Result<()> {
    let bytes = encode_png(x)?;
    fs::write(path, bytes).map_err(io_err(format!("writing {}", path.display())))
}

/// Reads an 8-bit PNG. Grayscale files give one channel, everything else is
/// converted to RGB.
pub fn read_png(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| NfcError::Format {
        context: format!("reading {}", path.display()),
        message: e.to_string(),
    })?;
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if gray {
        let g = img.to_luma8();
        let shape = Shape::new(1, g.height() as usize, g.width() as usize);
        let data = g.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        ImageTensor::new(shape, data)
    } else {
        let rgb = img.to_rgb8();
        let (h, w) = (rgb.height() as usize, rgb.width() as usize);
        let shape = Shape::new(3, h, w);
        Ok(ImageTensor::from_fn(shape, |c, r, col| {
            rgb.get_pixel(col as u32, r as u32).0[c] as f64 / 255.0
        }))
    }
}

/// `NFCT` magic, `u32` C, H, W, then `f64` values, all little-endian.
pub fn encode_raw(x: &ImageTensor) -> Vec<u8> {
    let s = x.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * x.len());
    out.extend_from_slice(RAW_MAGIC);
    for d in [s.channels, s.height, s.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<ImageTensor> {
    let bad = |message: String| NfcError::Format {
        context: "decoding raw tensor".into(),
        message,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(bad("missing NFCT header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2));
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * shape.len() {
        return Err(bad(format!(
            "body has {} bytes, shape {shape} needs {}",
            body.len(),
            8 * shape.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::new(shape, data)
}

pub fn write_raw(path: &Path, x: &ImageTensor) -> Result<()> {
    fs::write(path, encode_raw(x)).map_err(io_err(format!("writing {}", path.display())))
}

pub fn read_raw(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
    decode_raw(&bytes)
}
