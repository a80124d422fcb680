use super::{Result, TrainError};
use crate::geometry::{CameraIntrinsics, ScaffoldParams};
use crate::prerender::DEFAULT_RADIUS;
use crate::viewsampler::{AngleBox, PgvsParams, SamplerKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub t_total: usize,
    /// Fraction of iterations spent in refinement at the end.
    pub f_ref: f64,
    pub lambda_isds: f64,
    pub lambda_sp: f64,
    /// Foreground weight of the reliability loss.
    pub zeta: f64,
    pub lambda_eta: f64,
    /// Iterations per unit of `t` in `η(t)`.
    pub eta_time_unit: f64,
    pub eps_clip: f64,
    pub n_patch: usize,
    pub s_patch: usize,
    pub pgvs: PgvsParams,
    pub sampler: SamplerKind,
    pub ib_bounds: AngleBox,
    pub n_prerender: usize,
    pub learning_rate: f64,
    /// Step size for the density grid; the feature grid uses `learning_rate`.
    pub density_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Diffusion timesteps are drawn uniformly from this range.
    pub tau_range: (f64, f64),
    pub seed: u64,

    pub field_resolution: usize,
    pub field_half_extent: f64,
    /// Initial raw (pre-softplus) density.
    pub init_density: f64,
    /// Base latent side; refinement grows it to twice this.
    pub latent_side: usize,
    pub samples_per_ray: usize,
    pub near_offset: f64,
    pub camera_radius: f64,

    pub intrinsics: CameraIntrinsics,
    pub reference_side: usize,
    pub scaffold: ScaffoldParams,

    pub orbit_views: usize,
    pub orbit_phi: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_total: 5000,
            f_ref: 0.1,
            lambda_isds: 1.0,
            lambda_sp: 5e-5,
            zeta: 2.0,
            lambda_eta: 8.0,
            eta_time_unit: 100.0,
            eps_clip: 1e-5,
            n_patch: 256,
            s_patch: 16,
            pgvs: PgvsParams::for_total(5000),
            sampler: SamplerKind::Progressive,
            ib_bounds: AngleBox::in_boundary_default(),
            n_prerender: 64,
            learning_rate: 1e-2,
            density_learning_rate: 1e-1,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-15,
            tau_range: (0.02, 0.98),
            seed: 0,
            field_resolution: 64,
            field_half_extent: 1.0,
            init_density: -5.0,
            latent_side: 64,
            samples_per_ray: 64,
            near_offset: 1.5,
            camera_radius: DEFAULT_RADIUS,
            intrinsics: CameraIntrinsics::default_512(),
            reference_side: 512,
            scaffold: ScaffoldParams::default(),
            orbit_views: 120,
            orbit_phi: 0.0,
        }
    }
}

impl TrainConfig {
    /// Sets `t_total` and rescales the sampler's uniform point with it.
    pub fn with_total(mut self, t_total: usize) -> Self {
        let ratio = self.pgvs.t_u / self.pgvs.t_total;
        self.t_total = t_total;
        self.pgvs.t_total = t_total as f64;
        self.pgvs.t_u = ratio * t_total as f64;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.t_total == 0 {
            return bad("t_total must be positive");
        }
        if !(self.f_ref > 0.0 && self.f_ref < 1.0) {
            return bad("f_ref must lie in (0, 1)");
        }
        let lambdas = [self.lambda_isds, self.lambda_sp, self.zeta, self.lambda_eta];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("loss weights must be finite and nonnegative");
        }
        if self.lambda_eta == 0.0 || self.eta_time_unit <= 0.0 {
            return bad("lambda_eta and eta_time_unit must be positive");
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 0.5) {
            return bad("eps_clip must lie in (0, 0.5)");
        }
        if self.pgvs.t_total != self.t_total as f64 {
            return bad("pgvs.t_total must equal t_total");
        }
        self.pgvs.validate().map_err(TrainError::Config)?;
        if !self.ib_bounds.is_valid() {
            return bad("ib_bounds must be a nondegenerate angle box");
        }
        if self.n_prerender == 0 {
            return bad("n_prerender must be at least 1");
        }
        if self.latent_side == 0 || self.s_patch > self.latent_side {
            return bad("s_patch must not exceed the latent side");
        }
        if self.field_resolution < 2 || self.samples_per_ray == 0 {
            return bad("field resolution and samples per ray must be positive");
        }
        if !(self.camera_radius > self.near_offset && self.near_offset > 0.0) {
            return bad("camera radius must exceed the near offset");
        }
        let (lo, hi) = self.tau_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("tau_range must lie inside (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.density_learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("invalid optimizer constants");
        }
        Ok(())
    }
}
