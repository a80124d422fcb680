//! Dense channel-first tensors and binary masks.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;

/// A `channels × height × width` tensor stored channel-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == channels * height * width).then_some(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "shape mismatch");
        if self.data.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        sum / self.data.len() as f64
    }

    /// Bilinear resample of every channel to `height × width`, treating each
    /// value as the sample at its pixel-cell center.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, height, width);
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..self.channels {
                    let a = self.get(c, y0, x0) * (1.0 - tx) + self.get(c, y0, x1) * tx;
                    let b = self.get(c, y1, x0) * (1.0 - tx) + self.get(c, y1, x1) * tx;
                    out.set(c, y, x, a * (1.0 - ty) + b * ty);
                }
            }
        }
        out
    }
}

/// Binary `height × width` mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    /// Nearest-neighbour resample to a new side length.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Self::new(height, width, false);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                out.set(y, x, self.get(sy.min(self.height - 1), sx.min(self.width - 1)));
            }
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor3 {
        Tensor3 {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Magic prefix of the binary tensor file format.
pub const TENSOR_MAGIC: [u8; 4] = *b"LT3F";

/// Writes `t` as a 16-byte header (magic, then `channels`, `height`, `width`
/// as little-endian `u32`) followed by little-endian `f32` values.
pub fn write_tensor_file(path: &Path, t: &Tensor3) -> io::Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * t.data.len());
    buf.extend_from_slice(&TENSOR_MAGIC);
    for d in t.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &t.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf)
}

pub fn decode_tensor_bytes(bytes: &[u8]) -> io::Result<Tensor3> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if bytes.len() < 16 || bytes[..4] != TENSOR_MAGIC {
        return Err(bad("missing tensor header"));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(4), dim(8), dim(12));
    let body = &bytes[16..];
    if body.len() != 4 * c * h * w {
        return Err(bad("tensor body length does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor3::from_vec(c, h, w, data).expect("length checked"))
}

pub fn read_tensor_file(path: &Path) -> io::Result<Tensor3> {
    decode_tensor_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_identity_and_constant() {
        let t = Tensor3::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.resize_bilinear(2, 2), t);
        let c = Tensor3::filled(2, 4, 4, 0.25).resize_bilinear(7, 7);
        assert!(c.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn tensor_file_rejects_truncation() {
        let t = Tensor3::filled(2, 3, 4, 0.5);
        let dir = std::env::temp_dir().join(format!("lift3d-tensor-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.bin");
        write_tensor_file(&path, &t).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 24);
        assert_eq!(read_tensor_file(&path).unwrap(), t);
        assert!(decode_tensor_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_tensor_bytes(&bytes[4..]).is_err());
    }

    #[test]
    fn mask_resize_keeps_blocks() {
        let mut m = Mask::new(2, 2, false);
        m.set(0, 1, true);
        let up = m.resize_nearest(4, 4);
        assert_eq!(up.count(), 4);
        assert!(up.get(0, 2) && up.get(1, 3) && !up.get(2, 2));
    }
}
