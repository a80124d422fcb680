use super::{sigmoid, softplus, FieldError, FieldGrads, LatentField, Result, Stencil, FEATURE_CHANNELS};
use crate::geometry::CameraIntrinsics;
use crate::prerender::{CameraPose, LATENT_SCALE};
use crate::{Tensor3, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rays per scatter batch in [`backprop`].
const BACKPROP_CHUNK: usize = 512;

/// Image-plane and sampling configuration for latent renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Latent side at the start of training; the render may grow to twice it.
    pub base_side: usize,
    pub height: usize,
    pub width: usize,
    pub samples_per_ray: usize,
    /// Rays span `radius ∓ near_offset`.
    pub near_offset: f64,
    /// Intrinsics at `reference_side` pixels.
    pub intrinsics: CameraIntrinsics,
    pub reference_side: usize,
}

impl RenderSettings {
    pub fn new(base_side: usize) -> Self {
        Self {
            base_side,
            height: base_side,
            width: base_side,
            samples_per_ray: 64,
            near_offset: 1.5,
            intrinsics: CameraIntrinsics::default_512(),
            reference_side: 512,
        }
    }

    pub fn ray_count(&self) -> usize {
        self.height * self.width
    }

    /// Retargets the latent image plane; the field itself is untouched.
    pub fn upsample_render_dim(&mut self, height: usize, width: usize) -> Result<()> {
        let range = self.base_side..=2 * self.base_side;
        if !range.contains(&height) || !range.contains(&width) {
            return Err(FieldError::Shape(format!(
                "render size {height}x{width} outside [{}, {}]",
                self.base_side,
                2 * self.base_side
            )));
        }
        self.height = height;
        self.width = width;
        Ok(())
    }

    /// One ray per latent pixel. Latent pixel `(x, y)` looks through image
    /// pixel `(8x + 3.5, 8y + 3.5)` of the matching `8h × 8w` image.
    pub fn rays(&self, pose: &CameraPose) -> RayBundle {
        let s = LATENT_SCALE as f64;
        let k = &self.intrinsics;
        let sx = self.width as f64 * s / self.reference_side as f64;
        let sy = self.height as f64 * s / self.reference_side as f64;
        let frame = pose.frame();
        let mut directions = Vec::with_capacity(self.ray_count());
        for y in 0..self.height {
            for x in 0..self.width {
                let u = s * x as f64 + 0.5 * (s - 1.0);
                let v = s * y as f64 + 0.5 * (s - 1.0);
                let c = Vec3::new((u - k.cx * sx) / (k.fx * sx), (v - k.cy * sy) / (k.fy * sy), 1.0);
                directions.push(frame.to_world_dir(&c).normalize());
            }
        }
        RayBundle {
            origins: vec![frame.origin; self.ray_count()],
            directions,
            height: self.height,
            width: self.width,
            samples_per_ray: self.samples_per_ray,
            near: pose.radius - self.near_offset,
            far: pose.radius + self.near_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayBundle {
    pub origins: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    /// Image layout of the rays, row-major.
    pub height: usize,
    pub width: usize,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
}

impl RayBundle {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.far - self.near) / self.samples_per_ray as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.origins.len() != self.directions.len() || self.origins.len() != self.height * self.width {
            return Err(FieldError::Shape("ray counts do not match the image layout".into()));
        }
        if !(self.near < self.far) || self.samples_per_ray == 0 {
            return Err(FieldError::Shape("empty sampling interval".into()));
        }
        if self.directions.iter().any(|d| (d.norm() - 1.0).abs() > 1e-6) {
            return Err(FieldError::Shape("ray directions must be unit length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub height: usize,
    pub width: usize,
    /// Rendered latent `z_r`, `4 × h × w`.
    pub z: Tensor3,
    pub alpha: Vec<f64>,
    /// Per-ray, per-sample compositing weights, ray-major.
    pub weights: Vec<f64>,
}

struct Sample {
    raw: f64,
    sigma: f64,
    feature: [f64; 4],
    stencil: Option<Stencil>,
}

fn march(field: &LatentField, rays: &RayBundle, r: usize) -> Vec<Sample> {
    let (o, d) = (rays.origins[r], rays.directions[r]);
    let dt = rays.step();
    (0..rays.samples_per_ray)
        .map(|i| {
            let p = o + d * (rays.near + (i as f64 + 0.5) * dt);
            match field.query_raw(&p) {
                Some((raw, feature, s)) => Sample {
                    raw,
                    sigma: softplus(raw),
                    feature,
                    stencil: Some(s),
                },
                None => Sample {
                    raw: 0.0,
                    sigma: 0.0,
                    feature: [0.0; 4],
                    stencil: None,
                },
            }
        })
        .collect()
}

/// Transmittance before each sample and compositing weights.
fn composite(samples: &[Sample], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut trans = Vec::with_capacity(samples.len() + 1);
    let mut weights = Vec::with_capacity(samples.len());
    let mut t = 1.0;
    for s in samples {
        trans.push(t);
        let decay = (-s.sigma * dt).exp();
        weights.push(t * (1.0 - decay));
        t *= decay;
    }
    trans.push(t);
    (trans, weights)
}

/// Emission-absorption render at deterministic midpoint samples.
pub fn render(field: &LatentField, rays: &RayBundle) -> RenderOutput {
    let dt = rays.step();
    let per_ray: Vec<([f64; 4], f64, Vec<f64>)> = (0..rays.len())
        .into_par_iter()
        .map(|r| {
            let samples = march(field, rays, r);
            let (_, weights) = composite(&samples, dt);
            let mut z = [0.0; 4];
            let mut alpha = 0.0;
            for (s, w) in samples.iter().zip(&weights) {
                alpha += w;
                for c in 0..FEATURE_CHANNELS {
                    z[c] += w * s.feature[c];
                }
            }
            (z, alpha, weights)
        })
        .collect();

    let mut z = Tensor3::zeros(FEATURE_CHANNELS, rays.height, rays.width);
    let mut alpha = Vec::with_capacity(rays.len());
    let mut weights = Vec::with_capacity(rays.len() * rays.samples_per_ray);
    let plane = z.plane();
    for (r, (zr, a, w)) in per_ray.into_iter().enumerate() {
        for (c, v) in zr.iter().enumerate() {
            z.data[c * plane + r] = *v;
        }
        alpha.push(a.clamp(0.0, 1.0));
        weights.extend(w);
    }
    RenderOutput {
        height: rays.height,
        width: rays.width,
        z,
        alpha,
        weights,
    }
}

/// Per-sample gradient contribution: stencil, raw-density gradient, and
/// feature gradient.
type Contribution = (Stencil, f64, [f64; 4]);

fn ray_gradient(field: &LatentField, rays: &RayBundle, r: usize, g_z: [f64; 4], g_alpha: f64) -> Vec<Contribution> {
    let dt = rays.step();
    let samples = march(field, rays, r);
    let (trans, weights) = composite(&samples, dt);
    let c: Vec<f64> = samples
        .iter()
        .map(|s| (0..FEATURE_CHANNELS).map(|ch| g_z[ch] * s.feature[ch]).sum::<f64>() + g_alpha)
        .collect();
    let mut out = Vec::new();
    // suffix = Σ_{i>k} c_i w_i
    let mut suffix = 0.0;
    for k in (0..samples.len()).rev() {
        let s = &samples[k];
        let d_tau = c[k] * trans[k + 1] - suffix;
        suffix += c[k] * weights[k];
        if let Some(stencil) = s.stencil {
            let d_raw = d_tau * dt * sigmoid(s.raw);
            let d_feat = g_z.map(|g| g * weights[k]);
            out.push((stencil, d_raw, d_feat));
        }
    }
    out
}

/// Exact gradient of `Σ dz ⊙ z_r + Σ dalpha ⊙ alpha` with respect to the
/// raw grids. Per-ray work is parallel; the scatter runs in ray order so the
/// result is bit-reproducible.
pub fn backprop(field: &LatentField, rays: &RayBundle, dz: &Tensor3, dalpha: &[f64]) -> Result<FieldGrads> {
    if dz.dims() != [FEATURE_CHANNELS, rays.height, rays.width] || dalpha.len() != rays.len() {
        return Err(FieldError::Shape(format!(
            "upstream gradients {:?} / {} do not match {} rays",
            dz.dims(),
            dalpha.len(),
            rays.len()
        )));
    }
    let mut grads = FieldGrads::zeros_like(field);
    let plane = dz.plane();
    let ids: Vec<usize> = (0..rays.len()).collect();
    for chunk in ids.chunks(BACKPROP_CHUNK) {
        let contributions: Vec<Vec<Contribution>> = chunk
            .par_iter()
            .map(|&r| {
                let g_z = [0, 1, 2, 3].map(|c| dz.data[c * plane + r]);
                if g_z.iter().all(|&g| g == 0.0) && dalpha[r] == 0.0 {
                    return Vec::new();
                }
                ray_gradient(field, rays, r, g_z, dalpha[r])
            })
            .collect();
        for (stencil, d_raw, d_feat) in contributions.into_iter().flatten() {
            for (&n, &w) in stencil.nodes.iter().zip(&stencil.weights) {
                grads.density[n] += w * d_raw;
                for c in 0..FEATURE_CHANNELS {
                    grads.features[n * FEATURE_CHANNELS + c] += w * d_feat[c];
                }
            }
        }
    }
    Ok(grads)
}
