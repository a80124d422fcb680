use super::codec::{encode_view, latent_mask, LatentCodec, LATENT_SCALE};
use super::{rasterize, CameraPose, PrerenderError, Result, DEFAULT_RADIUS};
use crate::geometry::{CameraIntrinsics, ScaffoldMesh};
use crate::tensor::{read_tensor_file, write_tensor_file};
use crate::viewsampler::AngleBox;
use crate::{Mask, Tensor3};
use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MANIFEST: &str = "manifest.json";
/// Distances closer than this count as ties.
const TIE_TOLERANCE_DEG: f64 = 1e-9;

/// I.i.d. uniform poses over the angle box.
pub fn sample_ib_poses(n: usize, bounds: &AngleBox, seed: u64, radius: f64) -> Vec<CameraPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    (0..n)
        .map(|_| {
            let theta = draw(bounds.theta_min, bounds.theta_max);
            let phi = draw(bounds.phi_min, bounds.phi_max);
            CameraPose::new(theta, phi, radius)
        })
        .collect()
}

/// Great-circle angle in degrees between two (azimuth, elevation) directions.
pub fn great_circle_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (t1, p1) = (a.0.to_radians(), a.1.to_radians());
    let (t2, p2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * ((t2 - t1) / 2.0).sin().powi(2);
    (2.0 * h.sqrt().min(1.0).asin()).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankOptions {
    /// Intrinsics at `reference_side`; rescaled for every render size.
    pub intrinsics: CameraIntrinsics,
    pub reference_side: usize,
    /// Base latent side `L`; renders happen at `8 L`.
    pub latent_side: usize,
    /// Also cache latents at `2 L` for dimension refinement.
    pub cache_fine: bool,
}

impl Default for BankOptions {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default_512(),
            reference_side: 512,
            latent_side: 64,
            cache_fine: true,
        }
    }
}

impl BankOptions {
    pub fn intrinsics_for(&self, side: usize) -> CameraIntrinsics {
        self.intrinsics.for_resolution(self.reference_side, side)
    }

    pub fn latent_sides(&self) -> Vec<usize> {
        if self.cache_fine {
            vec![self.latent_side, 2 * self.latent_side]
        } else {
            vec![self.latent_side]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentLevel {
    pub side: usize,
    pub z: Tensor3,
    /// Foreground `M` at this latent resolution.
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrerenderedView {
    pub pose: CameraPose,
    pub rgb: RgbImage,
    /// Camera-space depth, `+∞` off the object.
    pub depth: Vec<f32>,
    pub mask: Mask,
    /// Latents from the base side upward.
    pub levels: Vec<LatentLevel>,
}

impl PrerenderedView {
    pub fn render(
        mesh: &ScaffoldMesh,
        pose: CameraPose,
        opts: &BankOptions,
        codec: &dyn LatentCodec,
    ) -> Result<Self> {
        let mut base = None;
        let mut levels = Vec::new();
        for l in opts.latent_sides() {
            let side = l * LATENT_SCALE;
            let out = rasterize(mesh, &pose, &opts.intrinsics_for(side), side, side);
            let z = encode_view(&out.rgb, &out.mask, codec, l)?;
            levels.push(LatentLevel {
                side: l,
                z,
                mask: latent_mask(&out.mask, l),
            });
            if base.is_none() {
                base = Some(out);
            }
        }
        let base = base.expect("at least one level");
        let side = base.mask.width as u32;
        let rgb = RgbImage::from_fn(side, side, |x, y| {
            Rgb([0, 1, 2].map(|c| to_u8(base.rgb.get(c, y as usize, x as usize))))
        });
        Ok(Self {
            pose,
            rgb,
            depth: base.depth.iter().map(|&d| d as f32).collect(),
            mask: base.mask,
            levels,
        })
    }

    /// Base-resolution latent `z_p`.
    pub fn z_p(&self) -> &Tensor3 {
        &self.levels[0].z
    }

    pub fn foreground(&self) -> &Mask {
        &self.levels[0].mask
    }

    /// `(z_p, M)` at latent side `side`, resampled from the closest cached
    /// level at or above it.
    pub fn latent_at(&self, side: usize) -> (Tensor3, Mask) {
        let level = self
            .levels
            .iter()
            .find(|l| l.side >= side)
            .unwrap_or_else(|| self.levels.last().expect("view has latents"));
        if level.side == side {
            return (level.z.clone(), level.mask.clone());
        }
        (level.z.resize_bilinear(side, side), level.mask.resize_nearest(side, side))
    }

    pub fn rgb_tensor(&self) -> Tensor3 {
        let (w, h) = (self.rgb.width() as usize, self.rgb.height() as usize);
        let mut t = Tensor3::zeros(3, h, w);
        for (x, y, p) in self.rgb.enumerate_pixels() {
            for c in 0..3 {
                t.set(c, y as usize, x as usize, p[c] as f64 / 255.0);
            }
        }
        t
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewBank {
    pub views: Vec<PrerenderedView>,
    pub ib_bounds: AngleBox,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    ib_bounds: AngleBox,
    latent_sides: Vec<usize>,
    views: Vec<ManifestView>,
}

#[derive(Serialize, Deserialize)]
struct ManifestView {
    pose: CameraPose,
    rgb: String,
    mask: String,
    depth: String,
    latents: Vec<String>,
    latent_masks: Vec<String>,
}

impl ViewBank {
    /// Renders and encodes every pose; views are independent and built in
    /// parallel.
    pub fn build(
        mesh: &ScaffoldMesh,
        poses: &[CameraPose],
        ib_bounds: AngleBox,
        opts: &BankOptions,
        codec: &dyn LatentCodec,
    ) -> Result<Self> {
        if poses.is_empty() {
            return Err(PrerenderError::EmptyBank);
        }
        if opts.latent_side == 0 {
            return Err(PrerenderError::InvalidOptions("latent side must be positive".into()));
        }
        for p in poses {
            p.validate()?;
            if !ib_bounds.contains(p.theta, p.phi) {
                return Err(PrerenderError::InvalidPose(format!(
                    "({}, {}) outside the in-boundary box",
                    p.theta, p.phi
                )));
            }
        }
        let views = poses
            .par_iter()
            .map(|&p| PrerenderedView::render(mesh, p, opts, codec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { views, ib_bounds })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Index of the view nearest in great-circle distance; ties go to the
    /// lowest index.
    pub fn find_closest_index(&self, theta: f64, phi: f64) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.views.iter().enumerate() {
            let d = great_circle_deg((theta, phi), (v.pose.theta, v.pose.phi));
            if best.map_or(true, |(_, bd)| d < bd - TIE_TOLERANCE_DEG) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i).ok_or(PrerenderError::EmptyBank)
    }

    pub fn find_closest(&self, theta: f64, phi: f64) -> Result<&PrerenderedView> {
        Ok(&self.views[self.find_closest_index(theta, phi)?])
    }

    /// Writes PNGs, depth and latent tensor files and a JSON manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.views.len());
        for (i, v) in self.views.iter().enumerate() {
            let name = |suffix: &str| format!("view_{i:03}_{suffix}");
            let entry = ManifestView {
                pose: v.pose,
                rgb: name("rgb.png"),
                mask: name("mask.png"),
                depth: name("depth.bin"),
                latents: v.levels.iter().map(|l| name(&format!("z{}.bin", l.side))).collect(),
                latent_masks: v.levels.iter().map(|l| name(&format!("m{}.png", l.side))).collect(),
            };
            v.rgb.save(dir.join(&entry.rgb))?;
            mask_image(&v.mask).save(dir.join(&entry.mask))?;
            let side = v.mask.width;
            let depth = Tensor3::from_vec(1, v.mask.height, side, v.depth.iter().map(|&d| d as f64).collect())
                .expect("depth matches mask");
            write_tensor_file(&dir.join(&entry.depth), &depth)?;
            for ((level, zf), mf) in v.levels.iter().zip(&entry.latents).zip(&entry.latent_masks) {
                write_tensor_file(&dir.join(zf), &level.z)?;
                mask_image(&level.mask).save(dir.join(mf))?;
            }
            entries.push(entry);
        }
        let manifest = Manifest {
            ib_bounds: self.ib_bounds,
            latent_sides: self.views[0].levels.iter().map(|l| l.side).collect(),
            views: entries,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        let mut views = Vec::with_capacity(manifest.views.len());
        for entry in manifest.views {
            let rgb = image::open(dir.join(&entry.rgb))?.to_rgb8();
            let mask = read_mask(&dir.join(&entry.mask))?;
            let depth = read_tensor_file(&dir.join(&entry.depth))?;
            if depth.dims() != [1, mask.height, mask.width] {
                return Err(PrerenderError::Format(format!("{} has wrong dimensions", entry.depth)));
            }
            let mut levels = Vec::new();
            for ((zf, mf), &side) in entry.latents.iter().zip(&entry.latent_masks).zip(&manifest.latent_sides) {
                let z = read_tensor_file(&dir.join(zf))?;
                if z.dims() != [4, side, side] {
                    return Err(PrerenderError::Format(format!("{zf} has wrong dimensions")));
                }
                levels.push(LatentLevel {
                    side,
                    z,
                    mask: read_mask(&dir.join(mf))?,
                });
            }
            views.push(PrerenderedView {
                pose: entry.pose,
                rgb,
                depth: depth.data.iter().map(|&d| d as f32).collect(),
                mask,
                levels,
            });
        }
        if views.is_empty() {
            return Err(PrerenderError::EmptyBank);
        }
        Ok(Self {
            views,
            ib_bounds: manifest.ib_bounds,
        })
    }
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose::new(90.0, 0.0, DEFAULT_RADIUS)
    }
}

fn mask_image(m: &Mask) -> GrayImage {
    GrayImage::from_fn(m.width as u32, m.height as u32, |x, y| {
        Luma([if m.get(y as usize, x as usize) { 255 } else { 0 }])
    })
}

fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path)?.to_luma8();
    let mut m = Mask::new(img.height() as usize, img.width() as usize, false);
    for (x, y, p) in img.enumerate_pixels() {
        m.set(y as usize, x as usize, p[0] >= 128);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank_of(poses: &[(f64, f64)]) -> ViewBank {
        let views = poses
            .iter()
            .map(|&(t, p)| PrerenderedView {
                pose: CameraPose::new(t, p, 3.0),
                rgb: RgbImage::new(8, 8),
                depth: vec![f32::INFINITY; 64],
                mask: Mask::new(8, 8, false),
                levels: vec![LatentLevel {
                    side: 1,
                    z: Tensor3::zeros(4, 1, 1),
                    mask: Mask::new(1, 1, false),
                }],
            })
            .collect();
        ViewBank {
            views,
            ib_bounds: AngleBox::in_boundary_default(),
        }
    }

    #[test]
    fn closest_of_two() {
        let bank = bank_of(&[(60.0, 0.0), (120.0, 0.0)]);
        assert_eq!(bank.find_closest_index(89.0, 0.0).unwrap(), 0);
        assert_eq!(bank.find_closest_index(91.0, 0.0).unwrap(), 1);
        // Equidistant: lowest index wins.
        assert_eq!(bank.find_closest_index(90.0, 0.0).unwrap(), 0);
    }

    #[test]
    fn empty_bank_errors() {
        let bank = bank_of(&[]);
        assert!(matches!(bank.find_closest(90.0, 0.0), Err(PrerenderError::EmptyBank)));
    }

    #[test]
    fn great_circle_basics() {
        assert!(great_circle_deg((10.0, 20.0), (10.0, 20.0)).abs() < 1e-9);
        assert!((great_circle_deg((0.0, 0.0), (90.0, 0.0)) - 90.0).abs() < 1e-9);
        assert!((great_circle_deg((359.0, 0.0), (1.0, 0.0)) - 2.0).abs() < 1e-9);
        // Azimuth is irrelevant at the pole.
        assert!(great_circle_deg((0.0, 90.0), (170.0, 90.0)).abs() < 1e-6);
    }

    #[test]
    fn degenerate_bounds_give_fixed_pose() {
        let poses = sample_ib_poses(1, &AngleBox::new(90.0, 90.0, 0.0, 0.0), 3, 3.0);
        assert_eq!(poses.len(), 1);
        assert_eq!((poses[0].theta, poses[0].phi), (90.0, 0.0));
    }
}
