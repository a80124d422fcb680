use super::CameraPose;
use crate::geometry::{CameraIntrinsics, ScaffoldMesh};
use crate::{Mask, Tensor3, Vec3};

/// Vertices closer than this to the camera plane cull their triangle.
const NEAR_PLANE: f64 = 1e-6;
/// Slack on the barycentric inside test so shared edges leave no gaps.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterOutput {
    /// `3 × height × width`, white where uncovered.
    pub rgb: Tensor3,
    /// Camera-space `z` per pixel, `+∞` where uncovered.
    pub depth: Vec<f64>,
    pub mask: Mask,
}

/// Z-buffered rasterization of a vertex-colored mesh with pixel centers at
/// integer coordinates and perspective-correct color interpolation.
pub fn rasterize(
    mesh: &ScaffoldMesh,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> RasterOutput {
    let mut rgb = Tensor3::filled(3, height, width, 1.0);
    let mut depth = vec![f64::INFINITY; width * height];
    let frame = pose.frame();
    let cam: Vec<Vec3> = mesh.vertices.iter().map(|v| frame.to_camera(v)).collect();

    for face in &mesh.faces {
        let c = face.map(|i| cam[i]);
        if c.iter().any(|p| p.z <= NEAR_PLANE) {
            continue;
        }
        let s = c.map(|p| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy));
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-18 || !area.is_finite() {
            continue;
        }
        let (min_x, max_x) = min_max(s.map(|p| p.0));
        let (min_y, max_y) = min_max(s.map(|p| p.1));
        if max_x < 0.0 || max_y < 0.0 || min_x > (width - 1) as f64 || min_y > (height - 1) as f64 {
            continue;
        }
        let x0 = min_x.ceil().max(0.0) as usize;
        let x1 = (max_x.floor() as usize).min(width - 1);
        let y0 = min_y.ceil().max(0.0) as usize;
        let y1 = (max_y.floor() as usize).min(height - 1);
        let inv_z = c.map(|p| 1.0 / p.z);
        let colors = face.map(|i| mesh.vertex_colors[i]);

        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = (x as f64, y as f64);
                let w0 = edge(s[1], s[2], p) / area;
                let w1 = edge(s[2], s[0], p) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < -EDGE_EPS || w1 < -EDGE_EPS || w2 < -EDGE_EPS {
                    continue;
                }
                let b = [w0 * inv_z[0], w1 * inv_z[1], w2 * inv_z[2]];
                let sum = b[0] + b[1] + b[2];
                let z = 1.0 / sum;
                let idx = y * width + x;
                if z < depth[idx] {
                    depth[idx] = z;
                    for ch in 0..3 {
                        let v = (b[0] * colors[0][ch] + b[1] * colors[1][ch] + b[2] * colors[2][ch]) / sum;
                        rgb.set(ch, y, x, v.clamp(0.0, 1.0));
                    }
                }
            }
        }
    }

    let mut mask = Mask::new(height, width, false);
    for (i, d) in depth.iter().enumerate() {
        mask.data[i] = d.is_finite();
    }
    RasterOutput { rgb, depth, mask }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

fn min_max(v: [f64; 3]) -> (f64, f64) {
    (v[0].min(v[1]).min(v[2]), v[0].max(v[1]).max(v[2]))
}
