//! 8-bit grayscale images and the binary (P5) PGM container used to
//! exchange them.

use crate::error::{Error, Result};
use std::path::Path;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions {width}x{height} must be positive"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "image has {} pixels, expected {width}x{height} = {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Parses a binary PGM (P5, maxval 255). Comments starting with `#` are
/// allowed anywhere in the header.
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let mut next_token = |what: &str| -> Result<&[u8]> {
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidParameter(format!("PGM header ends before {what}")));
        }
        Ok(&data[start..pos])
    };

    if next_token("magic")? != b"P5" {
        return Err(Error::InvalidParameter("not a binary PGM: magic is not P5".into()));
    }
    let mut read_number = |what: &str| -> Result<usize> {
        let tok = next_token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("PGM {what} is not a number")))
    };
    let width = read_number("width")?;
    let height = read_number("height")?;
    let maxval = read_number("maxval")?;
    if maxval != 255 {
        return Err(Error::InvalidParameter(format!(
            "PGM maxval {maxval} unsupported, expected 255"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::InvalidParameter("PGM raster does not follow the header".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidParameter("PGM dimensions overflow".into()))?;
    let raster = &data[pos..];
    if raster.len() < need {
        return Err(Error::InvalidParameter(format!(
            "PGM raster has {} bytes, expected {need}",
            raster.len()
        )));
    }
    GrayImage::new(width, height, raster[..need].to_vec())
}

/// Serializes to binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm<P: AsRef<Path>>(path: P) -> Result<GrayImage> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn write_pgm<P: AsRef<Path>>(path: P, img: &GrayImage) -> Result<()> {
    Ok(std::fs::write(path, encode_pgm(img))?)
}
