use super::{check_response, Guidance, GuidanceError, GuidanceRequest, GuidanceResponse, Result};
use crate::geometry::{uv_sphere, CameraIntrinsics, ScaffoldMesh};
use crate::prerender::{rasterize, stub_decode, stub_encode, CameraPose, LATENT_SCALE};
use crate::{Mask, Tensor3, Vec3};

const MODEL_ID: &str = "synthetic-oracle";

/// Sphere whose half facing the reference camera (`z < center.z`) is warm
/// and whose far half is cool.
pub fn two_tone_sphere(center: Vec3, radius: f64) -> ScaffoldMesh {
    uv_sphere(center, radius, 48, 96, |p| {
        if p.z < 0.0 {
            [0.9, 0.45, 0.15]
        } else {
            [0.15, 0.35, 0.85]
        }
    })
}

/// Deterministic stand-in for the diffusion sidecar built around a known
/// target mesh. Residuals pull a latent toward the target's stub-encoded
/// render at the requested pose, restricted to the regenerate region.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOracle {
    pub target: ScaffoldMesh,
    /// Intrinsics at `reference_side` pixels.
    pub intrinsics: CameraIntrinsics,
    pub reference_side: usize,
    pub reference_pose: CameraPose,
}

impl SyntheticOracle {
    pub fn new(target: ScaffoldMesh) -> Self {
        Self {
            target,
            intrinsics: CameraIntrinsics::default_512(),
            reference_side: 512,
            reference_pose: CameraPose::default(),
        }
    }

    pub fn with_intrinsics(mut self, k: CameraIntrinsics, reference_side: usize) -> Self {
        self.intrinsics = k;
        self.reference_side = reference_side;
        self
    }

    /// Same oracle with the target mapped through `p ↦ scale · p + offset`.
    pub fn transformed(&self, scale: f64, offset: Vec3) -> Self {
        Self {
            target: self.target.transformed(scale, offset),
            ..self.clone()
        }
    }

    fn render(&self, pose: &CameraPose, side: usize) -> crate::prerender::RasterOutput {
        let k = self.intrinsics.for_resolution(self.reference_side, side);
        rasterize(&self.target, pose, &k, side, side)
    }

    /// Stub-encoded target render at `pose`, `4 × l × l`.
    pub fn target_latent(&self, pose: &CameraPose, l: usize) -> Tensor3 {
        let out = self.render(pose, l * LATENT_SCALE);
        stub_encode(&out.rgb, &out.mask).expect("render side is a multiple of the latent scale")
    }

    fn respond(&self, req: &GuidanceRequest) -> Result<Tensor3> {
        match req {
            GuidanceRequest::Residual { z, mask, pose, .. } => {
                let pose = pose.ok_or_else(|| {
                    GuidanceError::InvalidRequest("the synthetic oracle needs the camera pose".into())
                })?;
                if z.height != z.width {
                    return Err(GuidanceError::InvalidRequest("oracle latents must be square".into()));
                }
                let target = self.target_latent(&pose, z.height);
                let mut r = z.clone();
                let plane = r.plane();
                for (i, v) in r.data.iter_mut().enumerate() {
                    *v = if mask.data[i % plane] { *v - target.data[i] } else { 0.0 };
                }
                Ok(r)
            }
            GuidanceRequest::Generate { size, .. } => Ok(self.render(&self.reference_pose, *size).rgb),
            GuidanceRequest::Depth { image } => {
                if image.height != image.width {
                    return Err(GuidanceError::InvalidRequest("oracle depth needs a square image".into()));
                }
                let out = self.render(&self.reference_pose, image.height);
                let far = out.depth.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
                let background = if far > 0.0 { 2.0 * far } else { 1.0 };
                let data = out.depth.iter().map(|&d| if d.is_finite() { d } else { background }).collect();
                Ok(Tensor3::from_vec(1, image.height, image.width, data).expect("square render"))
            }
            GuidanceRequest::Encode { image } => {
                // Coverage is whatever is not pure white.
                let mut mask = Mask::new(image.height, image.width, false);
                let plane = image.plane();
                for (i, m) in mask.data.iter_mut().enumerate() {
                    *m = (0..3).any(|c| image.data[c * plane + i] < 1.0);
                }
                stub_encode(image, &mask).map_err(|e| GuidanceError::Backend(e.to_string()))
            }
            GuidanceRequest::Decode { z } => stub_decode(z).map_err(|e| GuidanceError::Backend(e.to_string())),
        }
    }
}

impl Guidance for SyntheticOracle {
    fn call(&self, req: &GuidanceRequest) -> Result<GuidanceResponse> {
        req.validate()?;
        let tensor = self.respond(req)?;
        check_response(req, &tensor)?;
        Ok(GuidanceResponse {
            tensor,
            model: MODEL_ID.to_string(),
            wall_ms: 0,
        })
    }

    fn health(&self) -> Result<Vec<String>> {
        Ok(vec![MODEL_ID.to_string()])
    }

    fn mode(&self) -> &'static str {
        "oracle"
    }
}
