//! Binary PGM (P5) decoding and encoding.

use std::fs;
use std::path::Path;

use crate::error::{Result, VprError};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(VprError::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(VprError::dims("image pixels", width * height, pixels.len()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Rows as vectors, top to bottom.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.pixels.chunks(self.width).map(<[u8]>::to_vec).collect()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> VprError {
        VprError::Parse {
            what: "pgm",
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comments that run to the end of the line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn header_number(&mut self, name: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {name}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| VprError::Parse {
                what: "pgm",
                offset: start,
                message: format!("{name} out of range"),
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P5") => cur.pos = 2,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(cur.err(format!(
                "unsupported netpbm variant P{}; only binary P5 is accepted",
                *d as char
            )))
        }
        _ => return Err(cur.err("bad magic, expected P5")),
    }
    if !bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(cur.err("expected whitespace after magic"));
    }
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(VprError::Parse {
            what: "pgm",
            offset: maxval_at,
            message: format!("maxval {maxval} not in 1..=255"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(cur.err("expected a single whitespace byte before pixel data"));
    }
    cur.pos += 1;

    let needed = width
        .checked_mul(height)
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let available = bytes.len() - cur.pos;
    if available < needed {
        return Err(VprError::Parse {
            what: "pgm",
            offset: bytes.len(),
            message: format!("truncated payload: expected {needed} bytes, found {available}"),
        });
    }
    let payload = &bytes[cur.pos..cur.pos + needed];
    if let Some(k) = payload.iter().position(|&p| usize::from(p) > maxval) {
        return Err(VprError::Parse {
            what: "pgm",
            offset: cur.pos + k,
            message: format!("pixel value {} exceeds maxval {maxval}", payload[k]),
        });
    }
    GrayImage::new(width, height, payload.to_vec())
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| VprError::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| VprError::io(path, e))
}
