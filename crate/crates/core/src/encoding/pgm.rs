// SPDX-License-Identifier: Apache-2.0

//! Binary PGM (P5, maxval 255) reading and writing.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("PGM parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{width}x{height} image needs {expected} pixels, got {got}")]
    Size {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn parse_err(offset: usize, message: impl Into<String>) -> PgmError {
    PgmError::Parse {
        offset,
        message: message.into(),
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if pixels.len() != width * height {
            return Err(PgmError::Size {
                width,
                height,
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
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

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Nearest-neighbour resample: output pixel (r, c) samples source
    /// (floor(r * h / new_h), floor(c * w / new_w)).
    pub fn resize_nearest(&self, new_width: usize, new_height: usize) -> GrayImage {
        let mut pixels = Vec::with_capacity(new_width * new_height);
        for r in 0..new_height {
            let sr = r * self.height / new_height.max(1);
            for c in 0..new_width {
                let sc = c * self.width / new_width.max(1);
                pixels.push(self.get(sr, sc));
            }
        }
        GrayImage {
            width: new_width,
            height: new_height,
            pixels,
        }
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(parse_err(0, "missing P5 magic"));
        }
        cur.pos = 2;
        let (width, _) = cur.header_number("width")?;
        let (height, _) = cur.header_number("height")?;
        let (maxval, maxval_at) = cur.header_number("maxval")?;
        if maxval != 255 {
            return Err(parse_err(
                maxval_at,
                format!("maxval {maxval} unsupported, expected 255"),
            ));
        }
        if width == 0 || height == 0 {
            return Err(parse_err(maxval_at, "zero image dimension"));
        }
        // Exactly one whitespace byte separates the header from raster data.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(parse_err(cur.pos, "expected whitespace before raster")),
        }
        let need = width * height;
        let raster = &bytes[cur.pos..];
        if raster.len() < need {
            return Err(parse_err(
                bytes.len(),
                format!(
                    "truncated raster: need {need} bytes, found {}",
                    raster.len()
                ),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            pixels: raster[..need].to_vec(),
        })
    }

    pub fn read_pgm(path: &Path) -> Result<Self, PgmError> {
        let bytes = std::fs::read(path).map_err(|source| PgmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_pgm(&bytes)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), PgmError> {
        let io = |source| PgmError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_pgm_bytes()).map_err(io)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
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

    /// Next decimal header field and the offset where it starts.
    fn header_number(&mut self, what: &str) -> Result<(usize, usize), PgmError> {
        let before = self.pos;
        self.skip_space_and_comments();
        if self.pos == before {
            return Err(parse_err(
                self.pos,
                format!("expected whitespace before {what}"),
            ));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected decimal {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| parse_err(start, format!("{what} does not fit in usize")))
    }
}
