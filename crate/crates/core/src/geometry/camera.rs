use super::{GeometryError, PointCloud, Result, RgbdImage};
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixels. Pixel `(u, v)` has its center at integer
/// coordinates; `u` runs along image columns and `v` down the rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
        }
    }

    /// 45 mm lens on a 36 mm sensor imaged at 512 px: `fx = fy = 640`,
    /// principal point at the image center.
    pub fn default_512() -> Self {
        Self::new(640.0, 640.0, 256.0, 256.0)
    }

    /// Intrinsics for the same field of view at another square resolution.
    pub fn for_resolution(&self, from: usize, to: usize) -> Self {
        let s = to as f64 / from as f64;
        Self::new(self.fx * s, self.fy * s, self.cx * s, self.cy * s)
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.skew != 0.0 {
            return bad("skew must be zero");
        }
        if !(0.0..width as f64).contains(&self.cx) || !(0.0..height as f64).contains(&self.cy) {
            return bad("principal point outside the image");
        }
        Ok(())
    }
}

/// Lifts every valid pixel to a camera-space point
/// `(z (u − cx) / fx, z (v − cy) / fy, z)` with `z = depth_scale · depth`.
pub fn unproject(image: &RgbdImage, k: &CameraIntrinsics, depth_scale: f64) -> Result<PointCloud> {
    k.validate(image.width, image.height)?;
    if !(depth_scale > 0.0 && depth_scale.is_finite()) {
        return Err(GeometryError::InvalidImage(format!(
            "depth scale {depth_scale} must be positive"
        )));
    }
    let mut points = Vec::with_capacity(image.valid_count());
    let mut colors = Vec::with_capacity(points.capacity());
    for v in 0..image.height {
        for u in 0..image.width {
            if !image.is_valid(u, v) {
                continue;
            }
            let i = v * image.width + u;
            let z = depth_scale * image.depth[i];
            points.push(Vec3::new(
                z * (u as f64 - k.cx) / k.fx,
                z * (v as f64 - k.cy) / k.fy,
                z,
            ));
            colors.push(image.rgb[i]);
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    Ok(PointCloud::new(points, colors))
}

/// Projects a camera-space point to continuous pixel coordinates. Returns
/// `None` for points on or behind the image plane.
pub fn project(k: &CameraIntrinsics, p: &Vec3) -> Option<(f64, f64)> {
    (p.z > 0.0).then(|| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}
