use super::{
    add_patch, dimension_refine, isds_inject, refinement_start, reliability_loss, sparsity_loss, Adam, Result,
    TrainConfig, TrainError,
};
use crate::guidance::{compose_prompt, direction_bucket, Guidance};
use crate::latentfield::{backprop, render, FieldGrads, LatentField, RayBundle, RenderOutput, RenderSettings};
use crate::prerender::{CameraPose, ViewBank};
use crate::viewsampler::{is_ib, ViewDraw};
use crate::{Mask, Tensor3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    pub theta: f64,
    pub phi: f64,
    /// Latent side rendered this iteration.
    pub side: usize,
    pub is_ib: bool,
    /// L2 norm of the injected latent gradient.
    pub l_isds_grad_norm: f64,
    pub l_r: f64,
    pub l_sp: f64,
    /// `δ_R · L_R + λ_sp · L_sp`; the injected term has no scalar value.
    pub l_total_scalar: f64,
}

/// Field gradients of each loss term, computed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradients {
    pub isds: FieldGrads,
    pub reliability: FieldGrads,
    pub sparsity: FieldGrads,
}

impl TermGradients {
    pub fn total(&self) -> FieldGrads {
        let mut g = self.isds.clone();
        g.add_assign(&self.reliability);
        g.add_assign(&self.sparsity);
        g
    }
}

pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub field: LatentField,
    pub bank: ViewBank,
    pub settings: RenderSettings,
    /// Latent of an empty (white) view; fills the render where the field is
    /// transparent.
    pub background: [f64; 4],
    pub prompt: String,
    guidance: &'a dyn Guidance,
    optimizer: Adam,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: TrainConfig,
        bank: ViewBank,
        guidance: &'a dyn Guidance,
        prompt: &str,
        background: [f64; 4],
    ) -> Result<Self> {
        cfg.validate()?;
        if bank.is_empty() {
            return Err(TrainError::Config("the view bank is empty".into()));
        }
        let field = LatentField::new(cfg.field_resolution, cfg.field_half_extent, cfg.init_density, [0.0; 4]);
        let mut settings = RenderSettings::new(cfg.latent_side);
        settings.samples_per_ray = cfg.samples_per_ray;
        settings.near_offset = cfg.near_offset;
        settings.intrinsics = cfg.intrinsics;
        settings.reference_side = cfg.reference_side;
        let optimizer = Adam::new(&field, cfg.learning_rate, cfg.density_learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            field,
            bank,
            settings,
            background,
            prompt: prompt.to_string(),
            guidance,
            optimizer,
            rng,
        })
    }

    pub fn guidance(&self) -> &'a dyn Guidance {
        self.guidance
    }

    /// `z_r + (1 − α) · background`.
    pub fn composite(&self, out: &RenderOutput) -> Tensor3 {
        let mut z = out.z.clone();
        let plane = z.plane();
        for (i, v) in z.data.iter_mut().enumerate() {
            *v += (1.0 - out.alpha[i % plane]) * self.background[i / plane];
        }
        z
    }

    /// Composited latent and opacity at `pose` with a square latent of `side`.
    pub fn render_latent(&self, pose: &CameraPose, side: usize) -> Result<(Tensor3, Vec<f64>)> {
        let mut settings = self.settings;
        settings.base_side = side;
        settings.upsample_render_dim(side, side)?;
        let out = render(&self.field, &settings.rays(pose));
        Ok((self.composite(&out), out.alpha))
    }

    fn field_grads(&self, rays: &RayBundle, dz: &Tensor3, dalpha: &[f64]) -> Result<FieldGrads> {
        if dz.data.iter().all(|&v| v == 0.0) && dalpha.iter().all(|&v| v == 0.0) {
            return Ok(FieldGrads::zeros_like(&self.field));
        }
        Ok(backprop(&self.field, rays, dz, dalpha)?)
    }

    /// Pulls a latent-space upstream back through the background composite.
    fn through_composite(&self, dz: &Tensor3) -> Vec<f64> {
        let plane = dz.plane();
        (0..plane)
            .map(|p| -(0..dz.channels).map(|c| dz.data[c * plane + p] * self.background[c]).sum::<f64>())
            .collect()
    }

    /// Samples a pose, assembles every loss term and returns their field
    /// gradients without touching the parameters.
    pub fn compute(&mut self, i: usize, refine: bool) -> Result<(LossBreakdown, TermGradients)> {
        let cfg = &self.cfg;
        let t = i as f64;
        let draw = ViewDraw::random(&mut self.rng);
        let (theta, phi) = cfg.sampler.sample(t, &cfg.pgvs, &draw);
        let ib = is_ib(theta, phi, &self.bank.ib_bounds);
        let side = if refine {
            dimension_refine(i, cfg)?.0
        } else {
            cfg.latent_side
        };
        let mut settings = self.settings;
        settings.upsample_render_dim(side, side)?;

        let (pose, anchor) = if ib {
            let view = self.bank.find_closest(theta, phi)?;
            (view.pose, Some(view.latent_at(side)))
        } else {
            (CameraPose::new(theta, phi, cfg.camera_radius), None)
        };
        let rays = settings.rays(&pose);
        let out = render(&self.field, &rays);
        let z = self.composite(&out);

        let (guide_in, regen) = match &anchor {
            Some((z_p, fg)) => {
                let mut regen = fg.inverted();
                if refine {
                    regen = add_patch(&regen, cfg.n_patch, cfg.s_patch, &mut self.rng)?;
                }
                (blend(z_p, &z, &regen), regen)
            }
            None => (z.clone(), Mask::new(side, side, true)),
        };
        let center = self.bank.ib_bounds.center();
        let prompt = compose_prompt(&self.prompt, Some(direction_bucket(theta, phi, center.0)), false);
        let mut dz_isds = isds_inject(&guide_in, &regen, &prompt, &pose, self.guidance, cfg, &mut self.rng)?;
        let plane = dz_isds.plane();
        for (k, v) in dz_isds.data.iter_mut().enumerate() {
            if !regen.data[k % plane] {
                *v = 0.0;
            }
        }

        let (l_r, dz_r) = match (&anchor, refine) {
            (Some((z_p, fg)), false) => reliability_loss(&z, z_p, fg, t, cfg)?,
            _ => (0.0, Tensor3::zeros(z.channels, side, side)),
        };
        let (l_sp, mut da_sp) = sparsity_loss(&out.alpha, cfg);
        for v in &mut da_sp {
            *v *= cfg.lambda_sp;
        }
        let l_total_scalar = l_r + cfg.lambda_sp * l_sp;

        let grads = TermGradients {
            isds: self.field_grads(&rays, &dz_isds, &self.through_composite(&dz_isds))?,
            reliability: self.field_grads(&rays, &dz_r, &self.through_composite(&dz_r))?,
            sparsity: self.field_grads(&rays, &Tensor3::zeros(z.channels, side, side), &da_sp)?,
        };
        let breakdown = LossBreakdown {
            iteration: i,
            theta,
            phi,
            side,
            is_ib: ib,
            l_isds_grad_norm: dz_isds.data.iter().map(|v| v * v).sum::<f64>().sqrt(),
            l_r,
            l_sp,
            l_total_scalar,
        };
        Ok((breakdown, grads))
    }

    pub fn apply(&mut self, grads: &TermGradients) {
        let total = grads.total();
        self.optimizer.step(&mut self.field, &total);
    }

    pub fn train_step(&mut self, i: usize) -> Result<LossBreakdown> {
        let (b, g) = self.compute(i, false)?;
        self.apply(&g);
        Ok(b)
    }

    pub fn refine_step(&mut self, i: usize) -> Result<LossBreakdown> {
        let (b, g) = self.compute(i, true)?;
        self.apply(&g);
        Ok(b)
    }

    /// Runs iteration `i` (1-based) in the phase the schedule assigns it to.
    /// A guidance failure retries the iteration once from the same random
    /// state before giving up.
    pub fn step(&mut self, i: usize) -> Result<LossBreakdown> {
        let refine = i > refinement_start(&self.cfg);
        let snapshot = self.rng.clone();
        let run = |s: &mut Self| if refine { s.refine_step(i) } else { s.train_step(i) };
        match run(self) {
            Err(TrainError::Guidance(_)) => {
                self.rng = snapshot;
                run(self)
            }
            other => other,
        }
    }

    pub fn iterations_done(&self) -> u64 {
        self.optimizer.steps
    }
}

/// `keep ⊙ z_p + regen ⊙ z`.
fn blend(z_p: &Tensor3, z: &Tensor3, regen: &Mask) -> Tensor3 {
    let plane = z.plane();
    let mut out = z_p.clone();
    for (k, v) in out.data.iter_mut().enumerate() {
        if regen.data[k % plane] {
            *v = z.data[k];
        }
    }
    out
}
