use super::{Result, TrainConfig, TrainError};
use crate::guidance::Guidance;
use crate::prerender::CameraPose;
use crate::{Mask, Tensor3};
use rand::Rng;

/// Background weight of the reliability loss at iteration `t`.
pub fn eta(t: f64, cfg: &TrainConfig) -> f64 {
    (-(t / cfg.eta_time_unit) / cfg.lambda_eta).exp()
}

/// Mask-weighted L1 between the render and the pre-rendered latent, with
/// weight `ζ` on the foreground and `η(t)` elsewhere. Returns the loss and
/// its gradient with respect to `z_r`.
pub fn reliability_loss(z_r: &Tensor3, z_p: &Tensor3, m: &Mask, t: f64, cfg: &TrainConfig) -> Result<(f64, Tensor3)> {
    if z_r.dims() != z_p.dims() {
        return Err(TrainError::Shape(format!(
            "render {:?} vs pre-rendered {:?}",
            z_r.dims(),
            z_p.dims()
        )));
    }
    if (m.height, m.width) != (z_r.height, z_r.width) {
        return Err(TrainError::Shape(format!(
            "mask {}x{} vs latent {}x{}",
            m.height, m.width, z_r.height, z_r.width
        )));
    }
    let bg = eta(t, cfg);
    let plane = z_r.plane();
    let count = z_r.data.len() as f64;
    let mut grad = Tensor3::zeros(z_r.channels, z_r.height, z_r.width);
    let mut sum = 0.0;
    for (i, (a, b)) in z_r.data.iter().zip(&z_p.data).enumerate() {
        let w = if m.data[i % plane] { cfg.zeta } else { bg };
        let d = a - b;
        sum += w * d.abs();
        grad.data[i] = if d > 0.0 {
            w / count
        } else if d < 0.0 {
            -w / count
        } else {
            0.0
        };
    }
    Ok((sum / count, grad))
}

/// Binary entropy of the per-ray opacity, averaged over rays. Returns the
/// loss and its gradient with respect to `alpha`.
pub fn sparsity_loss(alpha: &[f64], cfg: &TrainConfig) -> (f64, Vec<f64>) {
    let eps = cfg.eps_clip;
    let count = alpha.len().max(1) as f64;
    let mut sum = 0.0;
    let grad = alpha
        .iter()
        .map(|&a| {
            let c = a.clamp(eps, 1.0 - eps);
            sum -= c * c.ln() + (1.0 - c) * (1.0 - c).ln();
            if a < eps || a > 1.0 - eps {
                0.0
            } else {
                ((1.0 - c) / c).ln() / count
            }
        })
        .collect();
    (sum / count, grad)
}

/// Inpainting score-distillation gradient with respect to `z`: the guidance
/// residual for the regenerate region `regen`, scaled by `λ_iSDS`.
///
/// The timestep and request seed are always drawn so that the random stream
/// does not depend on the weight; with a zero weight no request is made.
#[allow(clippy::too_many_arguments)]
pub fn isds_inject<R: Rng + ?Sized>(
    z: &Tensor3,
    regen: &Mask,
    prompt: &str,
    pose: &CameraPose,
    guidance: &dyn Guidance,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Tensor3> {
    let (lo, hi) = cfg.tau_range;
    let tau = rng.gen_range(lo..hi);
    let seed: u64 = rng.gen();
    if cfg.lambda_isds == 0.0 {
        return Ok(Tensor3::zeros(z.channels, z.height, z.width));
    }
    let mut r = guidance.residual(z, regen, prompt, tau, seed, Some(*pose))?;
    for v in &mut r.data {
        *v *= cfg.lambda_isds;
    }
    Ok(r)
}
