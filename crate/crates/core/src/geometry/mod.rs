//! In-boundary scaffold construction from a single RGB-D view.
//!
//! The chain is `unproject → remove_outliers → estimate_normals →
//! poisson_reconstruct → trim_low_density`. Every step is a pure function.

mod camera;
mod io;
mod knn;
mod marching_cubes;
mod normals;
mod outliers;
mod ply;
mod poisson;
mod primitives;
mod trim;

pub use camera::{project, unproject, CameraIntrinsics};
pub use io::{load_rgbd, read_depth_file, write_depth_file};
pub use knn::NeighborIndex;
pub use marching_cubes::{marching_cubes, ScalarGrid};
pub use normals::estimate_normals;
pub use outliers::remove_outliers;
pub use ply::{read_ply, write_mesh_ply, write_point_cloud_ply};
pub use poisson::{poisson_reconstruct, PoissonOptions};
pub use primitives::uv_sphere;
pub use trim::{quantile, trim_low_density};

use crate::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("input has no valid depth pixels")]
    EmptyInput,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("poisson solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("mesh has no vertex density")]
    MissingDensity,
    #[error("isosurface extraction produced an empty mesh")]
    EmptyMesh,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// RGB image plus relative depth. Pixels are row-major; `depth <= 0` or
/// non-finite marks a pixel invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl RgbdImage {
    pub fn new(width: usize, height: usize, rgb: Vec<[f64; 3]>, depth: Vec<f64>) -> Result<Self> {
        if rgb.len() != width * height || depth.len() != width * height {
            return Err(GeometryError::InvalidImage(format!(
                "expected {} pixels, got rgb={} depth={}",
                width * height,
                rgb.len(),
                depth.len()
            )));
        }
        if rgb.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(GeometryError::InvalidImage("rgb outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            rgb,
            depth,
        })
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        let d = self.depth[v * self.width + u];
        d.is_finite() && d > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite() && **d > 0.0).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<[f64; 3]>,
    pub normals: Option<Vec<Vec3>>,
    /// Set by [`estimate_normals`] for points whose neighbourhood was
    /// degenerate; those points carry no weight in reconstruction.
    pub degenerate: Vec<bool>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, colors: Vec<[f64; 3]>) -> Self {
        Self {
            points,
            colors,
            normals: None,
            degenerate: Vec::new(),
        }
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Self {
        self.degenerate = vec![false; normals.len()];
        self.normals = Some(normals);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points whose flag is set, preserving order.
    pub fn select(&self, keep: &[bool]) -> Self {
        let pick = |i: &usize| keep[*i];
        let idx: Vec<usize> = (0..self.len()).filter(pick).collect();
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            colors: idx.iter().map(|&i| self.colors[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| idx.iter().map(|&i| n[i]).collect()),
            degenerate: if self.degenerate.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.degenerate[i]).collect()
            },
        }
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldMesh {
    pub vertices: Vec<Vec3>,
    pub vertex_colors: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub vertex_density: Vec<f64>,
}

impl ScaffoldMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    /// Face indices in range and every face has three distinct vertices.
    pub fn faces_valid(&self) -> bool {
        let n = self.vertices.len();
        self.faces
            .iter()
            .all(|f| f.iter().all(|&i| i < n) && f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]];
                let b = self.vertices[f[1]];
                let c = self.vertices[f[2]];
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Signed enclosed volume; positive when faces wind counter-clockwise
    /// seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]];
                let b = self.vertices[f[1]];
                let c = self.vertices[f[2]];
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Applies `p ↦ scale · p + offset` to every vertex.
    pub fn transformed(&self, scale: f64, offset: Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = *v * scale + offset;
        }
        out
    }
}

/// Parameters for the whole scaffold chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaffoldParams {
    pub outlier_neighbors: usize,
    pub outlier_std_ratio: f64,
    pub normal_neighbors: usize,
    pub poisson: PoissonOptions,
    pub trim_quantile: f64,
}

impl Default for ScaffoldParams {
    fn default() -> Self {
        Self {
            outlier_neighbors: 5,
            outlier_std_ratio: 1.0,
            normal_neighbors: 16,
            poisson: PoissonOptions::default(),
            trim_quantile: 0.1,
        }
    }
}

/// Runs the cleaning and meshing half of the chain on an already unprojected
/// cloud.
pub fn mesh_from_points(cloud: &PointCloud, params: &ScaffoldParams) -> Result<ScaffoldMesh> {
    let cleaned = remove_outliers(cloud, params.outlier_neighbors, params.outlier_std_ratio)?;
    let oriented = estimate_normals(&cleaned, params.normal_neighbors)?;
    let mesh = poisson_reconstruct(&oriented, &params.poisson)?;
    trim_low_density(&mesh, params.trim_quantile)
}
