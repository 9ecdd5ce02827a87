//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask};

pub fn encode(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl Cursor<'_> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format { path: self.name.to_string(), offset: self.pos, msg: msg.into() }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits").parse().map_err(|_| Error::Format {
            path: self.name.to_string(),
            offset: start,
            msg: format!("{what} out of range"),
        })
    }
}

/// Parses a binary PNM. `name` is used in diagnostics only.
pub fn decode(bytes: &[u8], name: &str) -> Result<ImageBuffer> {
    let mut cur = Cursor { bytes, pos: 0, name };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(b"P2") | Some(b"P3") => return Err(cur.fail("ASCII PNM variants are not supported")),
        _ => return Err(cur.fail("expected magic P5 or P6")),
    };
    cur.pos = 2;
    if !cur.bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(cur.fail("expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        cur.pos = maxval_at;
        return Err(cur.fail(format!("unsupported maxval {maxval}, only 255 is accepted")));
    }
    if width == 0 || height == 0 {
        return Err(cur.fail("zero image dimension"));
    }
    if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(cur.fail("expected single whitespace before raster"));
    }
    cur.pos += 1;
    let need = width.checked_mul(height).and_then(|n| n.checked_mul(channels)).ok_or_else(|| cur.fail("image too large"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() != need {
        return Err(cur.fail(format!("raster has {} bytes, expected {need}", raster.len())));
    }
    ImageBuffer::new(width, height, channels, raster.to_vec())
}

pub fn read(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn write(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

/// Reads a P5 mask; any non-zero pixel is foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = read(path)?;
    Ok(Mask::from_image(&img, 0))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    write(path, &mask.to_image())
}
