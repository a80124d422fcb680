//! Dense voxel latent field: raw density plus four latent feature channels
//! on a `G³` node lattice spanning an axis-aligned cube, rendered with
//! emission-absorption compositing and differentiated by hand.

mod checkpoint;
mod render;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use render::{backprop, render, RayBundle, RenderOutput, RenderSettings};

use crate::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const FEATURE_CHANNELS: usize = 4;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FieldError>;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub resolution: usize,
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    /// Raw (pre-softplus) density per node, x fastest.
    pub density: Vec<f64>,
    /// Node-major features: `features[node * 4 + c]`.
    pub features: Vec<f64>,
}

/// Gradients with the same layout as the field grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrads {
    pub density: Vec<f64>,
    pub features: Vec<f64>,
}

impl FieldGrads {
    pub fn zeros_like(field: &LatentField) -> Self {
        Self {
            density: vec![0.0; field.density.len()],
            features: vec![0.0; field.features.len()],
        }
    }

    pub fn add_assign(&mut self, other: &FieldGrads) {
        for (a, b) in self.density.iter_mut().zip(&other.density) {
            *a += b;
        }
        for (a, b) in self.features.iter_mut().zip(&other.features) {
            *a += b;
        }
    }

    pub fn dot(&self, other: &FieldGrads) -> f64 {
        let d: f64 = self.density.iter().zip(&other.density).map(|(a, b)| a * b).sum();
        let f: f64 = self.features.iter().zip(&other.features).map(|(a, b)| a * b).sum();
        d + f
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.density.iter().chain(&self.features).all(|&v| v == 0.0)
    }
}

/// Trilinear stencil: eight node indices and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub nodes: [usize; 8],
    pub weights: [f64; 8],
}

impl LatentField {
    /// Field over `[−half, half]³` with constant raw density and features.
    pub fn new(resolution: usize, half_extent: f64, raw_density: f64, feature: [f64; 4]) -> Self {
        assert!(resolution >= 2, "need at least two nodes per axis");
        assert!(half_extent > 0.0);
        let n = resolution.pow(3);
        Self {
            resolution,
            bbox_min: Vec3::repeat(-half_extent),
            bbox_max: Vec3::repeat(half_extent),
            density: vec![raw_density; n],
            features: feature.iter().copied().cycle().take(n * FEATURE_CHANNELS).collect(),
        }
    }

    /// Random raw density in `density_range` and features in `[−1, 1]`.
    pub fn random(resolution: usize, half_extent: f64, density_range: (f64, f64), seed: u64) -> Self {
        let mut f = Self::new(resolution, half_extent, 0.0, [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in &mut f.density {
            *d = rng.gen_range(density_range.0..density_range.1);
        }
        for v in &mut f.features {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn spacing(&self) -> Vec3 {
        (self.bbox_max - self.bbox_min) / (self.resolution - 1) as f64
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.bbox_min + self.spacing().component_mul(&Vec3::new(i as f64, j as f64, k as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if self.density.len() != n || self.features.len() != n * FEATURE_CHANNELS {
            return Err(FieldError::Invalid("grid lengths do not match resolution".into()));
        }
        if (0..3).any(|a| self.bbox_max[a] <= self.bbox_min[a]) {
            return Err(FieldError::Invalid("degenerate bounding box".into()));
        }
        if !self.density.iter().chain(&self.features).all(|v| v.is_finite()) {
            return Err(FieldError::Invalid("non-finite grid value".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.bbox_min[a] && p[a] <= self.bbox_max[a])
    }

    /// Trilinear stencil at `p`, or `None` outside the box.
    pub fn stencil(&self, p: &Vec3) -> Option<Stencil> {
        if !self.contains(p) {
            return None;
        }
        let g = self.resolution;
        let rel = (p - self.bbox_min).component_div(&self.spacing());
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let i = (rel[a].floor() as usize).min(g - 2);
            base[a] = i;
            frac[a] = rel[a] - i as f64;
        }
        let mut nodes = [0; 8];
        let mut weights = [0.0; 8];
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            nodes[c] = self.node_index(base[0] + dx, base[1] + dy, base[2] + dz);
            let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
            weights[c] = wx * wy * wz;
        }
        Some(Stencil { nodes, weights })
    }

    /// Interpolated raw density and features at `p` (zeros outside).
    pub fn query_raw(&self, p: &Vec3) -> Option<(f64, [f64; 4], Stencil)> {
        let s = self.stencil(p)?;
        let mut raw = 0.0;
        let mut feat = [0.0; 4];
        for (&n, &w) in s.nodes.iter().zip(&s.weights) {
            raw += w * self.density[n];
            for (c, f) in feat.iter_mut().enumerate() {
                *f += w * self.features[n * FEATURE_CHANNELS + c];
            }
        }
        Some((raw, feat, s))
    }

    /// `(σ, feature)` at `p`: softplus of interpolated raw density.
    pub fn query(&self, p: &Vec3) -> (f64, [f64; 4]) {
        match self.query_raw(p) {
            Some((raw, feat, _)) => (softplus(raw), feat),
            None => (0.0, [0.0; 4]),
        }
    }

    pub fn query_many(&self, positions: &[Vec3]) -> Vec<(f64, [f64; 4])> {
        positions.iter().map(|p| self.query(p)).collect()
    }

    /// `self += scale · g` over both grids.
    pub fn axpy(&mut self, scale: f64, g: &FieldGrads) {
        for (a, b) in self.density.iter_mut().zip(&g.density) {
            *a += scale * b;
        }
        for (a, b) in self.features.iter_mut().zip(&g.features) {
            *a += scale * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_values_are_reproduced() {
        let f = LatentField::random(5, 1.0, (-2.0, 2.0), 1);
        for (i, j, k) in [(0, 0, 0), (4, 4, 4), (1, 2, 3), (4, 0, 2)] {
            let n = f.node_index(i, j, k);
            let (sigma, feat) = f.query(&f.node_position(i, j, k));
            assert!((sigma - softplus(f.density[n])).abs() < 1e-12);
            for c in 0..4 {
                assert!((feat[c] - f.features[n * 4 + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_corners_give_constant() {
        let f = LatentField::new(4, 1.0, 0.7, [0.1, -0.2, 0.3, 0.4]);
        let (sigma, feat) = f.query(&Vec3::new(0.1, -0.5, 0.33));
        assert!((sigma - softplus(0.7)).abs() < 1e-12);
        assert!((feat[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn outside_is_empty() {
        let f = LatentField::new(4, 1.0, 3.0, [1.0; 4]);
        assert_eq!(f.query(&Vec3::new(1.01, 0.0, 0.0)), (0.0, [0.0; 4]));
    }

    #[test]
    fn activations() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}
