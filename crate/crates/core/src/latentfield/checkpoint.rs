use super::{FieldError, LatentField, Result, FEATURE_CHANNELS};
use crate::Vec3;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub resolution: usize,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub iteration: usize,
}

/// Layout: `u64` header length, JSON header, then the density grid and the
/// feature grid as little-endian `f32`.
pub fn write_checkpoint(path: &Path, field: &LatentField, iteration: usize) -> Result<()> {
    let header = CheckpointHeader {
        resolution: field.resolution,
        bbox_min: field.bbox_min.into(),
        bbox_max: field.bbox_max.into(),
        iteration,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(8 + json.len() + 4 * (field.density.len() + field.features.len()));
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in field.density.iter().chain(&field.features) {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(LatentField, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| FieldError::Format(m.to_string());
    if bytes.len() < 8 {
        return Err(bad("truncated header"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + n).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let nodes = header.resolution.pow(3);
    let body = &bytes[8 + n..];
    if body.len() != 4 * nodes * (1 + FEATURE_CHANNELS) {
        return Err(bad("grid payload does not match resolution"));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let field = LatentField {
        resolution: header.resolution,
        bbox_min: Vec3::from(header.bbox_min),
        bbox_max: Vec3::from(header.bbox_max),
        density: values[..nodes].to_vec(),
        features: values[nodes..].to_vec(),
    };
    field.validate()?;
    Ok((field, header))
}
