//! RGB images in `[0, 1]` plus binary PPM and PNG I/O.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    #[default]
    Synthetic,
    External,
    Reference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    provenance: Provenance,
}

impl ImageBuffer {
    /// Row-major pixels; channel values are clamped into `[0, 1]` (NaN becomes 0).
    pub fn new(
        width: usize,
        height: usize,
        mut pixels: Vec<[f64; 3]>,
        provenance: Provenance,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{} pixels", width * height),
                got: format!("{} pixels", pixels.len()),
            });
        }
        for px in &mut pixels {
            for v in px.iter_mut() {
                *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
            provenance,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        provenance: Provenance,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels, provenance)
    }

    /// Gray image with all channels set from `values` (row-major).
    pub fn from_gray(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            width,
            height,
            values.iter().map(|&v| [v, v, v]).collect(),
            Provenance::Synthetic,
        )
    }

    /// Builds an image from three planes, clamping out-of-range values.
    pub fn from_planes(
        width: usize,
        height: usize,
        r: &[f64],
        g: &[f64],
        b: &[f64],
        provenance: Provenance,
    ) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("3 planes of {n} values"),
                got: format!("{}/{}/{}", r.len(), g.len(), b.len()),
            });
        }
        let pixels = (0..n).map(|i| [r[i], g[i], b[i]]).collect();
        Self::new(width, height, pixels, provenance)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// BT.601 grayscale plane, row-major.
    pub fn gray(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| luma(p[0], p[1], p[2])).collect()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }

    /// Rotates 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..w {
            for x in 0..h {
                pixels.push(self.pixels[(h - 1 - x) * w + y]);
            }
        }
        Self {
            width: h,
            height: w,
            pixels,
            provenance: self.provenance,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG") {
            decode_png(&bytes, path)
        } else if bytes.starts_with(b"P6") {
            decode_ppm(&bytes, path)
        } else {
            Err(Error::Format {
                path: path.to_path_buf(),
                message: "not a PNG or binary PPM (P6) image".into(),
            })
        }
        .map(|img| img.with_provenance(Provenance::External))
    }

    /// Writes an 8-bit binary PPM.
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_ppm(&mut out).map_err(|e| Error::io(path, e))
    }

    pub fn write_ppm(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|v| (v * 255.0).round() as u8))
            .collect();
        out.write_all(&bytes)?;
        out.flush()
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "malformed PPM header"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(path, format!("unsupported PPM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(path, "malformed PPM header"));
    }
    pos += 1;
    let data = &bytes[pos..];
    let n = width * height;
    if data.len() < 3 * n {
        return Err(format_err(
            path,
            format!("PPM raster has {} bytes, expected {}", data.len(), 3 * n),
        ));
    }
    let scale = maxval as f64;
    let pixels = data[..3 * n]
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / scale, c[1] as f64 / scale, c[2] as f64 / scale])
        .collect();
    ImageBuffer::new(width, height, pixels, Provenance::External)
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    let buf = &buf[..info.buffer_size()];
    let (width, height) = (info.width as usize, info.height as usize);

    let (samples, max): (Vec<f64>, f64) = match info.bit_depth {
        png::BitDepth::Sixteen => (
            buf.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect(),
            65535.0,
        ),
        png::BitDepth::Eight => (buf.iter().map(|&b| b as f64).collect(), 255.0),
        other => return Err(format_err(path, format!("unsupported PNG bit depth {other:?}"))),
    };
    let channels = info.color_type.samples();
    let pixels = samples
        .chunks_exact(channels)
        .map(|s| match channels {
            1 | 2 => [s[0] / max; 3],
            _ => [s[0] / max, s[1] / max, s[2] / max],
        })
        .collect();
    ImageBuffer::new(width, height, pixels, Provenance::External)
}
