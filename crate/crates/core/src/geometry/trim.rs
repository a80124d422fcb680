use super::{GeometryError, Result, ScaffoldMesh};

/// Linearly interpolated sample quantile (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(GeometryError::InvalidQuantile(q));
    }
    if values.is_empty() {
        return Err(GeometryError::MissingDensity);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Drops vertices whose density is below the `quantile` of the density
/// distribution, together with every incident face, and compacts indices.
pub fn trim_low_density(mesh: &ScaffoldMesh, quantile_level: f64) -> Result<ScaffoldMesh> {
    if !(0.0..=1.0).contains(&quantile_level) {
        return Err(GeometryError::InvalidQuantile(quantile_level));
    }
    if mesh.vertex_density.len() != mesh.vertices.len() {
        return Err(GeometryError::MissingDensity);
    }
    if mesh.vertices.is_empty() {
        return Ok(mesh.clone());
    }
    let threshold = quantile(&mesh.vertex_density, quantile_level)?;
    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    let mut out = ScaffoldMesh::default();
    for (i, &d) in mesh.vertex_density.iter().enumerate() {
        if d >= threshold {
            remap[i] = out.vertices.len();
            out.vertices.push(mesh.vertices[i]);
            out.vertex_colors.push(mesh.vertex_colors[i]);
            out.vertex_density.push(d);
        }
    }
    out.faces = mesh
        .faces
        .iter()
        .filter(|f| f.iter().all(|&v| remap[v] != usize::MAX))
        .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
        .collect();
    Ok(out)
}
