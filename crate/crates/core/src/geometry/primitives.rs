use super::ScaffoldMesh;
use crate::Vec3;
use std::f64::consts::PI;

/// Latitude/longitude sphere with poles on the y axis. Closed and
/// consistently wound (outward normals).
pub fn uv_sphere(
    center: Vec3,
    radius: f64,
    stacks: usize,
    slices: usize,
    color: impl Fn(&Vec3) -> [f64; 3],
) -> ScaffoldMesh {
    assert!(stacks >= 2 && slices >= 3);
    let mut vertices = vec![center + Vec3::new(0.0, -radius, 0.0)];
    for i in 1..stacks {
        let lat = -PI / 2.0 + PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let lon = 2.0 * PI * j as f64 / slices as f64;
            let dir = Vec3::new(lat.cos() * lon.cos(), lat.sin(), lat.cos() * lon.sin());
            vertices.push(center + radius * dir);
        }
    }
    vertices.push(center + Vec3::new(0.0, radius, 0.0));
    let top = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * slices + j % slices;

    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for j in 0..slices {
        faces.push([top, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }

    let vertex_colors = vertices.iter().map(|v| color(&(v - center))).collect();
    let vertex_density = vec![1.0; vertices.len()];
    ScaffoldMesh {
        vertices,
        vertex_colors,
        faces,
        vertex_density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uv_sphere_is_closed_and_outward() {
        let m = uv_sphere(Vec3::zeros(), 1.0, 24, 48, |_| [0.5; 3]);
        assert!(m.is_watertight());
        assert!(m.faces_valid());
        assert_eq!(m.euler_characteristic(), 2);
        let v = m.signed_volume();
        assert!((v - 4.0 / 3.0 * PI).abs() < 0.05, "volume {v}");
    }
}
