//! JSON bodies of the sidecar protocol. Tensors travel as base64 of
//! little-endian `f32` with an explicit `dims` field.

use super::{GuidanceError, Result};
use crate::{Mask, Tensor3};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTensor {
    pub dims: Vec<usize>,
    pub data: String,
}

impl WireTensor {
    pub fn from_tensor(t: &Tensor3) -> Self {
        let mut bytes = Vec::with_capacity(4 * t.data.len());
        for v in &t.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Self {
            dims: t.dims().to_vec(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_mask(m: &Mask) -> Self {
        Self::from_tensor(&m.to_tensor())
    }

    pub fn to_tensor(&self) -> Result<Tensor3> {
        let bad = |m: String| GuidanceError::Protocol(m);
        let [c, h, w] = <[usize; 3]>::try_from(self.dims.as_slice())
            .map_err(|_| bad(format!("expected 3 dims, got {:?}", self.dims)))?;
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| bad(format!("bad base64 payload: {e}")))?;
        if bytes.len() != 4 * c * h * w {
            return Err(bad(format!("payload has {} bytes for dims {:?}", bytes.len(), self.dims)));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Ok(Tensor3::from_vec(c, h, w, data).expect("length checked"))
    }

    pub fn to_mask(&self) -> Result<Mask> {
        let t = self.to_tensor()?;
        if t.channels != 1 {
            return Err(GuidanceError::Protocol(format!("mask has {} channels", t.channels)));
        }
        let mut m = Mask::new(t.height, t.width, false);
        for (dst, v) in m.data.iter_mut().zip(&t.data) {
            *dst = *v >= 0.5;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualBody {
    pub z: WireTensor,
    pub mask: WireTensor,
    pub prompt: String,
    pub tau: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateBody {
    pub prompt: String,
    pub seed: u64,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageBody {
    pub image: WireTensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentBody {
    pub z: WireTensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReply {
    pub residual: WireTensor,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageReply {
    pub image: WireTensor,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthReply {
    pub depth: WireTensor,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentReply {
    pub z: WireTensor,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthReply {
    pub models: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_is_f32_exact() {
        let t = Tensor3::from_vec(2, 1, 3, vec![0.5, -1.25, 3.0, 1e-3, 7.0, -0.0]).unwrap();
        let back = WireTensor::from_tensor(&t).to_tensor().unwrap();
        for (a, b) in t.data.iter().zip(&back.data) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(back.dims(), [2, 1, 3]);
    }

    #[test]
    fn little_endian_layout() {
        let t = Tensor3::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let w = WireTensor::from_tensor(&t);
        assert_eq!(STANDARD.decode(&w.data).unwrap(), 1.0f32.to_le_bytes());
    }

    #[test]
    fn malformed_payloads() {
        let w = WireTensor {
            dims: vec![1, 2, 2],
            data: STANDARD.encode([0u8; 12]),
        };
        assert!(w.to_tensor().is_err());
        let w = WireTensor {
            dims: vec![4],
            data: String::new(),
        };
        assert!(w.to_tensor().is_err());
        let w = WireTensor {
            dims: vec![1, 1, 1],
            data: "!!".into(),
        };
        assert!(w.to_tensor().is_err());
    }

    #[test]
    fn mask_round_trip() {
        let mut m = Mask::new(2, 3, false);
        m.set(1, 2, true);
        assert_eq!(WireTensor::from_mask(&m).to_mask().unwrap(), m);
    }
}
