use super::{refinement_start, LossBreakdown, Result, RunError, Stage, TrainConfig, TrainError, Trainer};
use crate::geometry::{mesh_from_points, unproject, RgbdImage, ScaffoldMesh};
use crate::guidance::{compose_prompt, Guidance, GuidanceCodec, SyntheticOracle};
use crate::latentfield::LatentField;
use crate::prerender::{
    sample_ib_poses, BankOptions, CameraPose, LatentCodec, StubCodec, ViewBank, LATENT_SCALE,
};
use crate::{Mask, Tensor3, Vec3};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Pixels at least this bright in every channel count as background.
pub const WHITE_THRESHOLD: f64 = 0.95;

/// Calibration rounds and the scale/offset change at which they stop.
const CALIBRATION_ROUNDS: usize = 4;
const CALIBRATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunInputs {
    pub prompt: String,
    /// Reference RGB `3 × h × w` in `[0, 1]`; generated from the prompt when
    /// absent.
    pub image: Option<Tensor3>,
    /// Depth for `image`, row-major; estimated by guidance when absent.
    pub depth: Option<Vec<f64>>,
}

impl RunInputs {
    pub fn text(prompt: &str) -> Self {
        Self {
            prompt: prompt.to_string(),
            image: None,
            depth: None,
        }
    }
}

/// Normalized scaffold: camera-space point `p` maps to `scale · (p − center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaffold {
    pub mesh: ScaffoldMesh,
    pub scale: f64,
    pub center: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub reference_ms: u128,
    pub scaffold_ms: u128,
    pub prerender_ms: u128,
    pub training_ms: u128,
    pub export_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub guidance_mode: String,
    pub prompt: String,
    pub reference_generated: bool,
    pub config: TrainConfig,
    pub scaffold_vertices: usize,
    pub scaffold_faces: usize,
    pub scaffold_scale: f64,
    pub scaffold_center: [f64; 3],
    pub records: Vec<LossBreakdown>,
    pub timings: StageTimings,
    pub frame_count: usize,
}

pub struct RunOutput {
    pub field: LatentField,
    pub bank: ViewBank,
    pub scaffold: Scaffold,
    /// Decoded orbit frames, RGB `3 × h × w`.
    pub frames: Vec<Tensor3>,
    pub report: RunReport,
}

/// The stub codec for the synthetic oracle, the sidecar's VAE otherwise.
pub fn codec_for<'a>(guidance: &'a dyn Guidance) -> Box<dyn LatentCodec + 'a> {
    if guidance.mode() == "oracle" {
        Box::new(StubCodec)
    } else {
        Box::new(GuidanceCodec(guidance))
    }
}

/// Latent of an all-white, empty view.
pub fn background_latent(codec: &dyn LatentCodec) -> Result<[f64; 4]> {
    let white = Tensor3::filled(3, LATENT_SCALE, LATENT_SCALE, 1.0);
    let z = codec.encode(&white, &Mask::new(LATENT_SCALE, LATENT_SCALE, false))?;
    if z.channels != 4 || z.height != 1 || z.width != 1 || !z.is_finite() {
        return Err(TrainError::Shape(format!("background latent has dims {:?}", z.dims())));
    }
    Ok([z.data[0], z.data[1], z.data[2], z.data[3]])
}

/// Reference image and depth: taken from the inputs when present, otherwise
/// requested from guidance. The flag reports whether the image was generated.
pub fn prepare_reference(
    inputs: &RunInputs,
    cfg: &TrainConfig,
    guidance: &dyn Guidance,
) -> Result<(Tensor3, Vec<f64>, bool)> {
    let (image, generated) = match &inputs.image {
        Some(img) => (img.clone(), false),
        None => {
            let prompt = compose_prompt(&inputs.prompt, None, true);
            (guidance.generate(&prompt, cfg.seed, cfg.reference_side)?, true)
        }
    };
    if image.channels != 3 {
        return Err(TrainError::Shape(format!("reference image has {} channels", image.channels)));
    }
    let depth = match (&inputs.depth, generated) {
        (Some(d), false) => d.clone(),
        _ => guidance.depth(&image)?.data,
    };
    if depth.len() != image.plane() {
        return Err(TrainError::Shape(format!(
            "depth has {} values for a {}x{} image",
            depth.len(),
            image.height,
            image.width
        )));
    }
    Ok((image, depth, generated))
}

/// Object pixels: finite positive depth and not near-white.
pub fn foreground_pixels(rgb: &Tensor3, depth: &[f64]) -> Vec<bool> {
    let plane = rgb.plane();
    (0..plane)
        .map(|p| {
            let d = depth[p];
            let darkest = (0..3).map(|c| rgb.data[c * plane + p]).fold(f64::INFINITY, f64::min);
            d.is_finite() && d > 0.0 && darkest < WHITE_THRESHOLD
        })
        .collect()
}

/// Lifts the reference to a mesh and normalizes it to unit bounding-box
/// diagonal centered on the origin.
pub fn build_scaffold(rgb: &Tensor3, depth: &[f64], cfg: &TrainConfig) -> Result<Scaffold> {
    let fg = foreground_pixels(rgb, depth);
    let plane = rgb.plane();
    let colors = (0..plane)
        .map(|p| [0, 1, 2].map(|c| rgb.data[c * plane + p].clamp(0.0, 1.0)))
        .collect();
    let masked = depth.iter().zip(&fg).map(|(&d, &f)| if f { d } else { 0.0 }).collect();
    let image = RgbdImage::new(rgb.width, rgb.height, colors, masked)?;
    if rgb.height != rgb.width {
        return Err(TrainError::Shape("the reference image must be square".into()));
    }
    let k = cfg.intrinsics.for_resolution(cfg.reference_side, rgb.width);
    let cloud = unproject(&image, &k, 1.0)?;
    let mesh = mesh_from_points(&cloud, &cfg.scaffold)?;
    let (lo, hi) = mesh.bounding_box().ok_or(crate::geometry::GeometryError::EmptyMesh)?;
    let diag = (hi - lo).norm();
    if !(diag > 0.0) {
        return Err(crate::geometry::GeometryError::EmptyMesh.into());
    }
    let scale = 1.0 / diag;
    let center = (lo + hi) * 0.5;
    Ok(Scaffold {
        mesh: mesh.transformed(scale, -center * scale),
        scale,
        center,
    })
}

pub fn build_bank(mesh: &ScaffoldMesh, cfg: &TrainConfig, codec: &dyn LatentCodec) -> Result<ViewBank> {
    let poses = sample_ib_poses(cfg.n_prerender, &cfg.ib_bounds, cfg.seed, cfg.camera_radius);
    let opts = BankOptions {
        intrinsics: cfg.intrinsics,
        reference_side: cfg.reference_side,
        latent_side: cfg.latent_side,
        cache_fine: true,
    };
    Ok(ViewBank::build(mesh, &poses, cfg.ib_bounds, &opts, codec)?)
}

/// Maps the oracle's target into the normalized scaffold frame, so that its
/// residuals agree with the pre-rendered views. The reference is rebuilt
/// from the adjusted oracle until the normalization is the identity.
pub fn calibrate_oracle(oracle: &SyntheticOracle, cfg: &TrainConfig) -> Result<SyntheticOracle> {
    let eye = Vec3::new(0.0, 0.0, cfg.camera_radius);
    let mut current = oracle.clone();
    for _ in 0..CALIBRATION_ROUNDS {
        let (rgb, depth, _) = prepare_reference(&RunInputs::text(""), cfg, &current)?;
        let s = build_scaffold(&rgb, &depth, cfg)?;
        let offset = (eye - s.center) * s.scale;
        let settled = (s.scale - 1.0).abs() < CALIBRATION_TOLERANCE && (s.center - eye).norm() < CALIBRATION_TOLERANCE;
        current = current.transformed(s.scale, offset);
        if settled {
            break;
        }
    }
    Ok(current)
}

/// Decoded frames at `n` azimuths evenly spaced from the in-boundary center.
pub fn render_orbit(trainer: &Trainer<'_>, codec: &dyn LatentCodec, n: usize, phi: f64) -> Result<Vec<Tensor3>> {
    let (theta0, _) = trainer.bank.ib_bounds.center();
    (0..n)
        .map(|k| {
            let pose = CameraPose::new(theta0 + 360.0 * k as f64 / n as f64, phi, trainer.cfg.camera_radius);
            let (z, _) = trainer.render_latent(&pose, trainer.cfg.latent_side)?;
            Ok(codec.decode(&z)?)
        })
        .collect()
}

/// Reference, scaffold, view bank, training and refinement, then the orbit
/// export. `progress` sees every iteration's breakdown.
pub fn run(
    cfg: &TrainConfig,
    inputs: &RunInputs,
    guidance: &dyn Guidance,
    progress: &mut dyn FnMut(&LossBreakdown),
) -> std::result::Result<RunOutput, RunError> {
    cfg.validate().map_err(|e| RunError::new(Stage::Reference, e))?;
    let mut timings = StageTimings::default();
    let codec = codec_for(guidance);

    let clock = Instant::now();
    let (rgb, depth, generated) =
        prepare_reference(inputs, cfg, guidance).map_err(|e| RunError::new(Stage::Reference, e))?;
    timings.reference_ms = clock.elapsed().as_millis();

    let clock = Instant::now();
    let scaffold = build_scaffold(&rgb, &depth, cfg).map_err(|e| RunError::new(Stage::Scaffold, e))?;
    timings.scaffold_ms = clock.elapsed().as_millis();

    let clock = Instant::now();
    let prerender = |e| RunError::new(Stage::Prerender, e);
    let bank = build_bank(&scaffold.mesh, cfg, codec.as_ref()).map_err(prerender)?;
    let background = background_latent(codec.as_ref()).map_err(prerender)?;
    timings.prerender_ms = clock.elapsed().as_millis();

    let clock = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), bank, guidance, &inputs.prompt, background)
        .map_err(|e| RunError::new(Stage::Training { iteration: 0 }, e))?;
    let mut records = Vec::with_capacity(cfg.t_total);
    for i in 1..=cfg.t_total {
        let b = trainer
            .step(i)
            .map_err(|e| RunError::new(Stage::Training { iteration: i }, e))?;
        progress(&b);
        records.push(b);
    }
    debug_assert!(refinement_start(cfg) < cfg.t_total);
    timings.training_ms = clock.elapsed().as_millis();

    let clock = Instant::now();
    let frames = render_orbit(&trainer, codec.as_ref(), cfg.orbit_views, cfg.orbit_phi)
        .map_err(|e| RunError::new(Stage::Export, e))?;
    timings.export_ms = clock.elapsed().as_millis();

    let report = RunReport {
        guidance_mode: guidance.mode().to_string(),
        prompt: inputs.prompt.clone(),
        reference_generated: generated,
        config: cfg.clone(),
        scaffold_vertices: scaffold.mesh.vertices.len(),
        scaffold_faces: scaffold.mesh.faces.len(),
        scaffold_scale: scaffold.scale,
        scaffold_center: [scaffold.center.x, scaffold.center.y, scaffold.center.z],
        records,
        timings,
        frame_count: frames.len(),
    };
    Ok(RunOutput {
        field: trainer.field,
        bank: trainer.bank,
        scaffold,
        frames,
        report,
    })
}
