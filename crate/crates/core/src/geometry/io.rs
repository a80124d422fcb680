use super::{GeometryError, Result, RgbdImage};
use crate::tensor::{decode_tensor_bytes, write_tensor_file, Tensor3, TENSOR_MAGIC};
use std::fs;
use std::path::Path;

/// Reads a single-channel depth raster: either a tensor file or a bare
/// little-endian `f32` dump of `width · height` values.
pub fn read_depth_file(path: &Path, width: usize, height: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() >= 4 && bytes[..4] == TENSOR_MAGIC {
        let t = decode_tensor_bytes(&bytes)?;
        if t.dims() != [1, height, width] {
            return Err(GeometryError::Format(format!(
                "depth tensor has dims {:?}, image is {width}x{height}",
                t.dims()
            )));
        }
        return Ok(t.data);
    }
    if bytes.len() != 4 * width * height {
        return Err(GeometryError::Format(format!(
            "raw depth file has {} bytes, expected {}",
            bytes.len(),
            4 * width * height
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect())
}

pub fn write_depth_file(path: &Path, width: usize, height: usize, depth: &[f64]) -> Result<()> {
    let t = Tensor3::from_vec(1, height, width, depth.to_vec())
        .ok_or_else(|| GeometryError::Format("depth length mismatch".into()))?;
    Ok(write_tensor_file(path, &t)?)
}

/// Loads an 8-bit RGB image and its depth raster of the same resolution.
pub fn load_rgbd(image_path: &Path, depth_path: &Path) -> Result<RgbdImage> {
    let img = image::open(image_path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = img
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    let depth = read_depth_file(depth_path, w, h)?;
    RgbdImage::new(w, h, rgb, depth)
}
