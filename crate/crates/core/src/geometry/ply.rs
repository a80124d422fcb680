use super::{GeometryError, PointCloud, Result, ScaffoldMesh};
use crate::Vec3;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_point_cloud_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(n) = &cloud.normals {
            let _ = write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z);
        }
        let c = cloud.colors[i];
        let _ = writeln!(s, " {} {} {}", to_u8(c[0]), to_u8(c[1]), to_u8(c[2]));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_mesh_ply(path: &Path, mesh: &ScaffoldMesh) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    s.push_str("property float density\n");
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        let c = mesh.vertex_colors[i];
        let d = mesh.vertex_density.get(i).copied().unwrap_or(0.0);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            v.x,
            v.y,
            v.z,
            to_u8(c[0]),
            to_u8(c[1]),
            to_u8(c[2]),
            d
        );
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads an ASCII PLY written by this module (or any ASCII PLY using the
/// same property names). Missing colors read as black, missing density as 0.
pub fn read_ply(path: &Path) -> Result<ScaffoldMesh> {
    let text = fs::read_to_string(path)?;
    let bad = |m: String| GeometryError::Format(m);
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for line in lines.by_ref() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(bad(format!("unsupported format {fmt}")))
            }
            ["element", "vertex", n] => {
                vertex_count = n.parse().map_err(|_| bad("bad vertex count".into()))?;
                in_vertex = true;
            }
            ["element", "face", n] => {
                face_count = n.parse().map_err(|_| bad("bad face count".into()))?;
                in_vertex = false;
            }
            ["property", "list", ..] => {}
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let col = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(bad("vertex positions missing".into())),
    };
    let rgb = [col("red"), col("green"), col("blue")];
    let dens = col("density");
    let mut mesh = ScaffoldMesh::default();
    for _ in 0..vertex_count {
        let line = lines.next().ok_or_else(|| bad("truncated vertex list".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("bad vertex value: {e}")))?;
        if vals.len() < props.len() {
            return Err(bad("short vertex row".into()));
        }
        mesh.vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        let c = rgb.map(|i| i.map_or(0.0, |i| vals[i] / 255.0));
        mesh.vertex_colors.push(c);
        mesh.vertex_density.push(dens.map_or(0.0, |i| vals[i]));
    }
    for _ in 0..face_count {
        let line = lines.next().ok_or_else(|| bad("truncated face list".into()))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("bad face value: {e}")))?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(bad("only triangle faces are supported".into()));
        }
        mesh.faces.push([idx[1], idx[2], idx[3]]);
    }
    Ok(mesh)
}
