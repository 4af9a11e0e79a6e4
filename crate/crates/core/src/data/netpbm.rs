//! Binary Netpbm images: P5 graymaps and P6 pixmaps with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelFormat {
    Gray,
    Rgb,
}

impl PixelFormat {
    fn magic(self) -> &'static [u8; 2] {
        match self {
            PixelFormat::Gray => b"P5",
            PixelFormat::Rgb => b"P6",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            PixelFormat::Gray => 1,
            PixelFormat::Rgb => 3,
        }
    }
}

/// 8-bit image, interleaved channels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub format: PixelFormat,
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(format: PixelFormat, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape("image", "width and height must be positive"));
        }
        if data.len() != width * height * format.channels() {
            return Err(Error::shape(
                "image",
                format!("{width}x{height} {format:?} image needs {} bytes, got {}", width * height * format.channels(), data.len()),
            ));
        }
        Ok(Image { format, width, height, data })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(PixelFormat::Gray, width, height, data)
    }

    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(PixelFormat::Rgb, width, height, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = format!(
            "{}\n{} {}\n255\n",
            std::str::from_utf8(self.format.magic()).expect("ascii"),
            self.width,
            self.height
        );
        let mut out = header.into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    /// Gray values scaled by `1 / divisor`.
    pub fn scaled(&self, divisor: f64) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / divisor).collect()
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Image { offset: self.pos, detail: detail.into() }
    }

    /// Skips whitespace and `#` comments running to end of line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
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
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("digits");
        text.parse().map_err(|_| Error::Image { offset: start, detail: format!("{what} out of range") })
    }
}

/// Parses a P5 or P6 image with maxval 255.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut h = Header { bytes, pos: 0 };
    let format = match bytes.get(..2) {
        Some(b"P5") => PixelFormat::Gray,
        Some(b"P6") => PixelFormat::Rgb,
        _ => return Err(h.err("bad magic, expected P5 or P6")),
    };
    h.pos = 2;
    if !bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(h.err("expected whitespace after magic"));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = {
        h.skip_separators();
        h.pos
    };
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Image { offset: maxval_at, detail: format!("maxval {maxval} unsupported, expected 255") });
    }
    if width == 0 || height == 0 {
        return Err(h.err("zero width or height"));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(h.err("expected single whitespace before raster"));
    }
    h.pos += 1;
    let need = width * height * format.channels();
    let available = bytes.len() - h.pos;
    if available < need {
        return Err(Error::Image {
            offset: bytes.len(),
            detail: format!("truncated raster: {need} bytes expected, {available} present"),
        });
    }
    if available > need {
        return Err(Error::Image { offset: h.pos + need, detail: "trailing bytes after raster".into() });
    }
    Image::new(format, width, height, bytes[h.pos..].to_vec())
}

pub fn read(path: &Path) -> Result<Image> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Reads an image and checks its pixel format.
pub fn read_as(path: &Path, format: PixelFormat) -> Result<Image> {
    let img = read(path)?;
    if img.format != format {
        return Err(Error::Image {
            offset: 0,
            detail: format!("{}: expected {format:?} image, found {:?}", path.display(), img.format),
        });
    }
    Ok(img)
}
