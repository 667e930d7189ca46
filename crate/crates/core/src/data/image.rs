//! Binary PPM (P6) images and the pixel-space helpers built on them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit interleaved RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Maps a byte to model input space: `(v/255 − 0.5)/0.5`.
pub fn normalize(v: u8) -> f64 {
    (f64::from(v) / 255.0 - 0.5) / 0.5
}

/// Inverse of [`normalize`], rounded and clamped to a byte.
pub fn denormalize(v: f64) -> u8 {
    to_byte((v * 0.5 + 0.5) * 255.0)
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::dim(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel values as `f64` in `[0, 255]`, laid out `3×H×W`.
    pub fn to_raw_tensor(&self) -> Tensor {
        self.planar(f64::from)
    }

    /// Normalized model input `3×H×W`.
    pub fn to_tensor(&self) -> Tensor {
        self.planar(normalize)
    }

    fn planar(&self, f: impl Fn(u8) -> f64) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; 3 * w * h];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = f(px[c]);
            }
        }
        Tensor::new(vec![3, h, w], data).expect("non-empty image")
    }

    /// Rounds a `3×H×W` tensor of `[0, 255]` values to bytes.
    pub fn from_raw_tensor(t: &Tensor) -> Result<Self> {
        Self::from_planar(t, to_byte)
    }

    /// Converts a normalized `3×H×W` tensor back to bytes.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Self::from_planar(t, denormalize)
    }

    fn from_planar(t: &Tensor, f: impl Fn(f64) -> u8) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!("expected a 3×H×W tensor, got {s:?}")));
        }
        let (h, w) = (s[1], s[2]);
        let src = t.data();
        let mut data = vec![0; 3 * w * h];
        for i in 0..w * h {
            for c in 0..3 {
                data[i * 3 + c] = f(src[c * w * h + i]);
            }
        }
        RgbImage::from_raw(w, h, data)
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        if bytes.len() < 2 || &bytes[..2] != b"P6" {
            return Err(format_err(0, "missing P6 magic"));
        }
        pos += 2;
        let mut fields = [0usize; 3];
        for (i, field) in fields.iter_mut().enumerate() {
            // whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(format_err(pos, "truncated header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(format_err(pos, "expected a decimal number in header"));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .unwrap()
                .parse()
                .map_err(|_| format_err(start, "header number out of range"))?;
            if i < 2 && *field == 0 {
                return Err(format_err(start, "zero image dimension"));
            }
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(format_err(pos, format!("unsupported maxval {maxval}")));
        }
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(format_err(pos, "missing whitespace after header")),
        }
        let needed = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| format_err(pos, "image too large"))?;
        let body = &bytes[pos..];
        if body.len() < needed {
            return Err(format_err(
                bytes.len(),
                format!("truncated pixel data: {} of {needed} bytes", body.len()),
            ));
        }
        RgbImage::from_raw(width, height, body[..needed].to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.encode_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_ppm(&bytes)
    }
}

/// Reads a PPM file as normalized model input.
pub fn load_image(path: &Path) -> Result<Tensor> {
    Ok(RgbImage::load(path)?.to_tensor())
}

/// Writes a normalized `3×H×W` tensor as PPM.
pub fn save_image(t: &Tensor, path: &Path) -> Result<()> {
    RgbImage::from_tensor(t)?.save(path)
}

/// Bilinear resize of a `C×H×W` tensor using pixel-center alignment
/// (`src = (dst + 0.5)·in/out − 0.5`, clamped to the border).
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = t.shape();
    if s.len() != 3 || out_h == 0 || out_w == 0 {
        return Err(Error::dim(format!("cannot resize {s:?} to {out_h}x{out_w}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let (ys, xs) = (axis(out_h, h), axis(out_w, w));
    let src = t.data();
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Crops the region `(x, y, w, h)` out of a `C×H×W` tensor.
pub fn crop(t: &Tensor, x: usize, y: usize, w: usize, h: usize) -> Result<Tensor> {
    let s = t.shape();
    if s.len() != 3 || w == 0 || h == 0 || x + w > s[2] || y + h > s[1] {
        return Err(Error::dim(format!("crop ({x},{y},{w},{h}) outside image {s:?}")));
    }
    let (c, ih, iw) = (s[0], s[1], s[2]);
    let src = t.data();
    let mut data = Vec::with_capacity(c * w * h);
    for ch in 0..c {
        for row in y..y + h {
            let start = ch * ih * iw + row * iw + x;
            data.extend_from_slice(&src[start..start + w]);
        }
    }
    Tensor::new(vec![c, h, w], data)
}
