//! Everything diffusion-, depth- or codec-shaped sits behind [`Guidance`]:
//! a deterministic [`SyntheticOracle`] for offline runs and a
//! [`RemoteGuidance`] client for the HTTP sidecar.
//!
//! Mask convention for residual requests: `true` marks cells the model may
//! regenerate, `false` marks the keep region.

mod oracle;
mod prompt;
mod remote;
pub mod wire;

pub use oracle::{two_tone_sphere, SyntheticOracle};
pub use prompt::{compose_prompt, direction_bucket, ViewDirection, REFERENCE_PREFIX, REFERENCE_SUFFIX};
pub use remote::{RemoteGuidance, DEFAULT_TIMEOUT};

use crate::prerender::{CameraPose, LatentCodec, PrerenderError, LATENT_CHANNELS, LATENT_SCALE};
use crate::{Mask, Tensor3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("guidance endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("guidance request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("guidance server returned {status}: {message}")]
    Server { status: u16, message: String },
    #[error("guidance protocol error: {0}")]
    Protocol(String),
    #[error("invalid guidance request: {0}")]
    InvalidRequest(String),
    #[error("guidance backend failure: {0}")]
    Backend(String),
}

impl GuidanceError {
    /// Transport-level failures worth one retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, GuidanceError::Unreachable(_) | GuidanceError::Timeout(_))
    }
}

pub type Result<T> = std::result::Result<T, GuidanceError>;

#[derive(Debug, Clone, PartialEq)]
pub enum GuidanceRequest {
    /// Noise residual `ε̂ − ε` for latent `z` at diffusion time `tau`.
    /// `pose` is a client-side hint used only by the synthetic oracle and
    /// never sent over the wire.
    Residual {
        z: Tensor3,
        mask: Mask,
        prompt: String,
        tau: f64,
        seed: u64,
        pose: Option<CameraPose>,
    },
    Generate {
        prompt: String,
        seed: u64,
        size: usize,
    },
    Depth {
        image: Tensor3,
    },
    Encode {
        image: Tensor3,
    },
    Decode {
        z: Tensor3,
    },
}

impl GuidanceRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            GuidanceRequest::Residual { .. } => "residual",
            GuidanceRequest::Generate { .. } => "generate",
            GuidanceRequest::Depth { .. } => "depth",
            GuidanceRequest::Encode { .. } => "encode",
            GuidanceRequest::Decode { .. } => "decode",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GuidanceError::InvalidRequest(m));
        match self {
            GuidanceRequest::Residual { z, mask, tau, .. } => {
                if z.channels != LATENT_CHANNELS || mask.height != z.height || mask.width != z.width {
                    return bad(format!("latent {:?} and mask {}x{} disagree", z.dims(), mask.height, mask.width));
                }
                if !(*tau > 0.0 && *tau < 1.0) {
                    return bad(format!("tau {tau} outside (0, 1)"));
                }
            }
            GuidanceRequest::Generate { prompt, size, .. } => {
                if prompt.is_empty() || *size == 0 || size % LATENT_SCALE != 0 {
                    return bad(format!("generate needs a prompt and a size divisible by {LATENT_SCALE}"));
                }
            }
            GuidanceRequest::Depth { image } => {
                if image.channels != 3 {
                    return bad("depth needs a 3-channel image".into());
                }
            }
            GuidanceRequest::Encode { image } => {
                if image.channels != 3 || image.height % LATENT_SCALE != 0 || image.width % LATENT_SCALE != 0 {
                    return bad(format!("cannot encode image {:?}", image.dims()));
                }
            }
            GuidanceRequest::Decode { z } => {
                if z.channels != LATENT_CHANNELS {
                    return bad(format!("cannot decode latent {:?}", z.dims()));
                }
            }
        }
        Ok(())
    }

    /// Dimensions the response tensor must have.
    pub fn expected_dims(&self) -> [usize; 3] {
        match self {
            GuidanceRequest::Residual { z, .. } => z.dims(),
            GuidanceRequest::Generate { size, .. } => [3, *size, *size],
            GuidanceRequest::Depth { image } => [1, image.height, image.width],
            GuidanceRequest::Encode { image } => {
                [LATENT_CHANNELS, image.height / LATENT_SCALE, image.width / LATENT_SCALE]
            }
            GuidanceRequest::Decode { z } => [3, z.height * LATENT_SCALE, z.width * LATENT_SCALE],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceResponse {
    /// Residual, image, depth or latent, depending on the request.
    pub tensor: Tensor3,
    pub model: String,
    pub wall_ms: u64,
}

/// Checks a payload against the request contract.
pub fn check_response(req: &GuidanceRequest, tensor: &Tensor3) -> Result<()> {
    let want = req.expected_dims();
    if tensor.dims() != want {
        return Err(GuidanceError::Protocol(format!(
            "{} response has dims {:?}, expected {:?}",
            req.kind(),
            tensor.dims(),
            want
        )));
    }
    if !tensor.is_finite() {
        return Err(GuidanceError::Protocol(format!("{} response has non-finite values", req.kind())));
    }
    Ok(())
}

pub trait Guidance: Send + Sync {
    fn call(&self, req: &GuidanceRequest) -> Result<GuidanceResponse>;

    /// Model identifiers; doubles as a reachability probe.
    fn health(&self) -> Result<Vec<String>>;

    /// `"oracle"` or `"remote"`.
    fn mode(&self) -> &'static str;

    fn residual(&self, z: &Tensor3, mask: &Mask, prompt: &str, tau: f64, seed: u64, pose: Option<CameraPose>) -> Result<Tensor3> {
        let req = GuidanceRequest::Residual {
            z: z.clone(),
            mask: mask.clone(),
            prompt: prompt.to_string(),
            tau,
            seed,
            pose,
        };
        Ok(self.call(&req)?.tensor)
    }

    fn generate(&self, prompt: &str, seed: u64, size: usize) -> Result<Tensor3> {
        let req = GuidanceRequest::Generate {
            prompt: prompt.to_string(),
            seed,
            size,
        };
        Ok(self.call(&req)?.tensor)
    }

    fn depth(&self, image: &Tensor3) -> Result<Tensor3> {
        Ok(self.call(&GuidanceRequest::Depth { image: image.clone() })?.tensor)
    }

    fn encode(&self, image: &Tensor3) -> Result<Tensor3> {
        Ok(self.call(&GuidanceRequest::Encode { image: image.clone() })?.tensor)
    }

    fn decode(&self, z: &Tensor3) -> Result<Tensor3> {
        Ok(self.call(&GuidanceRequest::Decode { z: z.clone() })?.tensor)
    }
}

/// Uses a guidance backend's encode/decode as the view-bank codec.
pub struct GuidanceCodec<'a>(pub &'a dyn Guidance);

impl LatentCodec for GuidanceCodec<'_> {
    fn encode(&self, rgb: &Tensor3, _mask: &Mask) -> std::result::Result<Tensor3, PrerenderError> {
        self.0.encode(rgb).map_err(|e| PrerenderError::Codec(e.to_string()))
    }

    fn decode(&self, z: &Tensor3) -> std::result::Result<Tensor3, PrerenderError> {
        self.0.decode(z).map_err(|e| PrerenderError::Codec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_dims_per_kind() {
        let z = Tensor3::zeros(4, 8, 8);
        assert_eq!(GuidanceRequest::Decode { z: z.clone() }.expected_dims(), [3, 64, 64]);
        let image = Tensor3::zeros(3, 64, 32);
        assert_eq!(GuidanceRequest::Encode { image: image.clone() }.expected_dims(), [4, 8, 4]);
        assert_eq!(GuidanceRequest::Depth { image }.expected_dims(), [1, 64, 32]);
        let g = GuidanceRequest::Generate {
            prompt: "x".into(),
            seed: 0,
            size: 512,
        };
        assert_eq!(g.expected_dims(), [3, 512, 512]);
    }

    #[test]
    fn request_validation() {
        let r = GuidanceRequest::Residual {
            z: Tensor3::zeros(4, 8, 8),
            mask: Mask::new(8, 8, true),
            prompt: String::new(),
            tau: 1.0,
            seed: 0,
            pose: None,
        };
        assert!(r.validate().is_err());
        assert!(GuidanceRequest::Encode {
            image: Tensor3::zeros(3, 12, 16)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn response_check_rejects_nan_and_shape() {
        let req = GuidanceRequest::Decode {
            z: Tensor3::zeros(4, 2, 2),
        };
        assert!(check_response(&req, &Tensor3::zeros(3, 16, 16)).is_ok());
        assert!(check_response(&req, &Tensor3::zeros(3, 16, 8)).is_err());
        assert!(check_response(&req, &Tensor3::filled(3, 16, 16, f64::NAN)).is_err());
    }
}
