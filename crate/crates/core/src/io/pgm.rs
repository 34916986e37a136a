use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Frame, Image, Mask};

/// Raw 8-bit gray levels.
pub type GrayImage = Image<u8>;

/// Gray levels at or above this read as foreground.
pub const MASK_THRESHOLD: u8 = 128;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                None => Error::parse(field, "truncated header"),
                Some(_) => Error::parse(field, "expected a decimal number"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(field, "number out of range"))
    }
}

/// Parses a binary graymap with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse("magic", "unsupported magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(Error::parse("magic", "unsupported magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 {
        return Err(Error::parse("width", "must be positive"));
    }
    if height == 0 {
        return Err(Error::parse("height", "must be positive"));
    }
    if maxval != 255 {
        return Err(Error::parse(
            "maxval",
            format!("unsupported maxval {maxval}, expected 255"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse("maxval", "missing whitespace after header")),
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse("width", "image too large"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < count {
        return Err(Error::parse(
            "pixels",
            format!(
                "truncated pixel data: expected {count} bytes, got {}",
                raster.len()
            ),
        ));
    }
    Image::new(height, width, raster[..count].to_vec())
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    read_pgm(&std::fs::read(path)?)
}

/// Binarizes at [`MASK_THRESHOLD`].
pub fn pgm_to_mask(img: &GrayImage) -> Mask {
    Image::new(
        img.height(),
        img.width(),
        img.data()
            .iter()
            .map(|&v| (v >= MASK_THRESHOLD) as u8)
            .collect(),
    )
    .expect("same dims")
}

/// Background 0, foreground 255.
pub fn mask_to_pgm(mask: &Mask) -> GrayImage {
    Image::new(
        mask.height(),
        mask.width(),
        mask.data()
            .iter()
            .map(|&v| if v != 0 { 255 } else { 0 })
            .collect(),
    )
    .expect("same dims")
}

pub fn pgm_to_frame(img: &GrayImage) -> Frame {
    Image::new(
        img.height(),
        img.width(),
        img.data().iter().map(|&v| v as f32 / 255.0).collect(),
    )
    .expect("same dims")
}

/// Quantizes [0, 1] intensities to the nearest gray level.
pub fn frame_to_pgm(frame: &Frame) -> GrayImage {
    Image::new(
        frame.height(),
        frame.width(),
        frame
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    )
    .expect("same dims")
}
