#![allow(dead_code)]

/// Asymptotic Kolmogorov survival function with the usual small-sample
/// correction on `λ`.
pub fn kolmogorov_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test; returns `(D, p)`.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_p(d, n))
}

/// Two-sample KS test; returns `(D, p)`.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    (d, kolmogorov_p(d, n_eff))
}

use lift3d::guidance::{two_tone_sphere, SyntheticOracle};
use lift3d::prerender::CameraPose;
use lift3d::trainer::{
    background_latent, build_bank, build_scaffold, calibrate_oracle, prepare_reference, RunInputs, TrainConfig,
    Trainer,
};
use lift3d::prerender::StubCodec;
use lift3d::Vec3;

pub const SPHERE_PROMPT: &str = "a two-tone ball";

/// Scaled run: 600 iterations, 32³ grid, 32² latents, 16 views.
pub fn scaled_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        field_resolution: 32,
        latent_side: 32,
        n_prerender: 16,
        orbit_views: 8,
        seed,
        ..TrainConfig::default()
    }
    .with_total(600);
    cfg.scaffold.poisson.grid_depth = 6;
    cfg
}

pub fn sphere_oracle(cfg: &TrainConfig) -> SyntheticOracle {
    let raw = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6));
    calibrate_oracle(&raw, cfg).expect("calibration")
}

pub fn sphere_trainer<'a>(cfg: &TrainConfig, oracle: &'a SyntheticOracle) -> Trainer<'a> {
    let (rgb, depth, _) = prepare_reference(&RunInputs::text(SPHERE_PROMPT), cfg, oracle).unwrap();
    let scaffold = build_scaffold(&rgb, &depth, cfg).unwrap();
    let bank = build_bank(&scaffold.mesh, cfg, &StubCodec).unwrap();
    let bg = background_latent(&StubCodec).unwrap();
    Trainer::new(cfg.clone(), bank, oracle, SPHERE_PROMPT, bg).unwrap()
}

pub fn ib_eval_poses(r: f64) -> Vec<CameraPose> {
    let mut out = Vec::new();
    for theta in [70.0, 90.0, 110.0] {
        for phi in [-20.0, 0.0, 20.0] {
            out.push(CameraPose::new(theta, phi, r));
        }
    }
    out
}

pub fn ob_eval_poses(r: f64) -> Vec<CameraPose> {
    [(0.0, 0.0), (180.0, 0.0), (225.0, 10.0), (270.0, 0.0), (315.0, -10.0), (150.0, 40.0)]
        .iter()
        .map(|&(t, p)| CameraPose::new(t, p, r))
        .collect()
}

/// Mean latent L1 between the field's renders and the oracle's targets.
pub fn latent_error(trainer: &Trainer<'_>, oracle: &SyntheticOracle, poses: &[CameraPose]) -> f64 {
    let l = trainer.cfg.latent_side;
    poses
        .iter()
        .map(|p| {
            let (z, _) = trainer.render_latent(p, l).unwrap();
            z.mean_abs_diff(&oracle.target_latent(p, l))
        })
        .sum::<f64>()
        / poses.len() as f64
}

use lift3d::guidance::{Guidance, GuidanceError, GuidanceRequest, GuidanceResponse};
use std::collections::BTreeSet;
use std::sync::Mutex;

/// Small run that exercises both training phases in well under a second
/// per step.
pub fn tiny_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        field_resolution: 16,
        latent_side: 16,
        n_prerender: 4,
        samples_per_ray: 32,
        orbit_views: 5,
        seed,
        ..TrainConfig::default()
    }
    .with_total(40);
    cfg.scaffold.poisson.grid_depth = 5;
    cfg
}

/// Wraps a backend, logging request kinds and failing chosen residual
/// requests (counted from 0) with a timeout.
pub struct Recording<'a> {
    pub inner: &'a dyn Guidance,
    pub log: Mutex<Vec<&'static str>>,
    fail: Mutex<(usize, BTreeSet<usize>)>,
}

impl<'a> Recording<'a> {
    pub fn new(inner: &'a dyn Guidance, fail_residuals: &[usize]) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
            fail: Mutex::new((0, fail_residuals.iter().copied().collect())),
        }
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.log.lock().unwrap().clone()
    }
}

impl Guidance for Recording<'_> {
    fn call(&self, req: &GuidanceRequest) -> Result<GuidanceResponse, GuidanceError> {
        self.log.lock().unwrap().push(req.kind());
        if let GuidanceRequest::Residual { .. } = req {
            let mut f = self.fail.lock().unwrap();
            let n = f.0;
            f.0 += 1;
            if f.1.contains(&n) {
                return Err(GuidanceError::Timeout(std::time::Duration::from_millis(1)));
            }
        }
        self.inner.call(req)
    }

    fn health(&self) -> Result<Vec<String>, GuidanceError> {
        self.inner.health()
    }

    fn mode(&self) -> &'static str {
        self.inner.mode()
    }
}
