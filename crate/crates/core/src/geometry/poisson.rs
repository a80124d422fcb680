//! Poisson surface reconstruction on a regular grid.
//!
//! The oriented samples are splatted into a staggered vector field `V` (one
//! component per grid-edge direction) with a quadratic B-spline kernel. The
//! indicator `χ` minimizes `Σ_edges ((χ_b − χ_a)/h − V_e)²` with `χ = 0` on
//! the grid boundary, whose normal equations are the 7-point discretization
//! of `Δχ = ∇·V`. The system is solved with conjugate gradients and the
//! surface is extracted at the mean of `χ` over the input samples.

use super::{
    marching_cubes, GeometryError, NeighborIndex, PointCloud, Result, ScaffoldMesh, ScalarGrid,
};
use crate::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonOptions {
    /// Grid side is `2^grid_depth` nodes.
    pub grid_depth: u32,
    /// Grid side relative to the largest bounding-box extent.
    pub scale: f64,
    pub max_iterations: usize,
    /// Relative residual at which the solve stops.
    pub tolerance: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            grid_depth: 7,
            scale: 1.3,
            max_iterations: 20_000,
            tolerance: 1e-7,
        }
    }
}

pub(crate) const MIN_POINTS: usize = 100;

/// Quadratic B-spline weights for the three nodes around continuous grid
/// coordinate `g`, returned with the index of the first node.
#[inline]
fn bspline2(g: f64) -> (i64, [f64; 3]) {
    let c = g.round();
    let d = g - c;
    (
        c as i64 - 1,
        [0.5 * (0.5 - d).powi(2), 0.75 - d * d, 0.5 * (0.5 + d).powi(2)],
    )
}

struct Lattice {
    n: usize,
    origin: Vec3,
    h: f64,
}

impl Lattice {
    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    /// Splats `value` at `p` into a grid of `dims` whose nodes sit at
    /// `origin + h·(index + shift)`.
    fn splat(&self, grid: &mut [f64], dims: [usize; 3], shift: [f64; 3], p: &Vec3, value: f64) {
        let mut base = [0i64; 3];
        let mut w = [[0.0; 3]; 3];
        for a in 0..3 {
            let g = (p[a] - self.origin[a]) / self.h - shift[a];
            let (b, ws) = bspline2(g);
            base[a] = b;
            w[a] = ws;
        }
        for (dk, wk) in w[2].iter().enumerate() {
            let k = base[2] + dk as i64;
            if k < 0 || k >= dims[2] as i64 {
                continue;
            }
            for (dj, wj) in w[1].iter().enumerate() {
                let j = base[1] + dj as i64;
                if j < 0 || j >= dims[1] as i64 {
                    continue;
                }
                for (di, wi) in w[0].iter().enumerate() {
                    let i = base[0] + di as i64;
                    if i < 0 || i >= dims[0] as i64 {
                        continue;
                    }
                    let at = ((k as usize * dims[1]) + j as usize) * dims[0] + i as usize;
                    grid[at] += value * wi * wj * wk;
                }
            }
        }
    }
}

/// Reconstructs a closed surface from an oriented point cloud.
pub fn poisson_reconstruct(cloud: &PointCloud, options: &PoissonOptions) -> Result<ScaffoldMesh> {
    let normals = cloud.normals.as_ref().ok_or(GeometryError::MissingNormals)?;
    if cloud.len() < MIN_POINTS {
        return Err(GeometryError::TooFewPoints {
            needed: MIN_POINTS,
            got: cloud.len(),
        });
    }
    let active = |i: usize| cloud.degenerate.get(i).is_none_or(|d| !d);
    let (lo, hi) = cloud.bounding_box().expect("nonempty");
    let extent = (hi - lo).max().max(1e-9);
    let n = 1usize << options.grid_depth.clamp(2, 10);
    let side = extent * options.scale;
    let h = side / (n - 1) as f64;
    let center = (lo + hi) * 0.5;
    let lat = Lattice {
        n,
        origin: center - Vec3::repeat(side * 0.5),
        h,
    };

    // Staggered normal field and sample support density.
    let edge_dims = [[n - 1, n, n], [n, n - 1, n], [n, n, n - 1]];
    let mut field: Vec<Vec<f64>> = edge_dims
        .iter()
        .map(|d| vec![0.0; d[0] * d[1] * d[2]])
        .collect();
    let mut support = vec![0.0; n * n * n];
    for (i, (p, nrm)) in cloud.points.iter().zip(normals).enumerate() {
        if !active(i) {
            continue;
        }
        for axis in 0..3 {
            let mut shift = [0.0; 3];
            shift[axis] = 0.5;
            lat.splat(&mut field[axis], edge_dims[axis], shift, p, nrm[axis]);
        }
        lat.splat(&mut support, [n; 3], [0.0; 3], p, 1.0);
    }

    // rhs = h · (V_{i-1/2} − V_{i+1/2}) summed over axes, zero on the boundary.
    let mut rhs = vec![0.0; n * n * n];
    rhs.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| {
        if k == 0 || k == n - 1 {
            return;
        }
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let ex = |ii: usize| field[0][(k * n + j) * (n - 1) + ii];
                let ey = |jj: usize| field[1][(k * (n - 1) + jj) * n + i];
                let ez = |kk: usize| field[2][(kk * n + j) * n + i];
                let div = (ex(i - 1) - ex(i)) + (ey(j - 1) - ey(j)) + (ez(k - 1) - ez(k));
                slab[j * n + i] = h * div;
            }
        }
    });

    let chi = conjugate_gradient(&lat, &rhs, options)?;
    let mut grid = ScalarGrid::new([n; 3], lat.origin, h);
    grid.values = chi;

    let (sum, count) = cloud
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| active(*i))
        .fold((0.0, 0usize), |(s, c), (_, p)| (s + grid.sample(p), c + 1));
    let iso = sum / count.max(1) as f64;
    let (vertices, faces) = marching_cubes(&grid, iso);
    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }

    let mut density_grid = ScalarGrid::new([n; 3], lat.origin, h);
    density_grid.values = support;
    let index = NeighborIndex::new(&cloud.points);
    let vertex_density = vertices
        .iter()
        .map(|v| density_grid.sample(v).max(0.0))
        .collect();
    let vertex_colors = vertices
        .iter()
        .map(|v| cloud.colors[index.nearest_one(v).expect("nonempty")])
        .collect();
    Ok(ScaffoldMesh {
        vertices,
        vertex_colors,
        faces,
        vertex_density,
    })
}

/// `out = A x` for the Dirichlet grid Laplacian scaled by `h²`; boundary
/// rows are the identity and interior rows ignore boundary columns.
fn apply_laplacian(lat: &Lattice, x: &[f64], out: &mut [f64]) {
    let n = lat.n;
    out.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| {
        for j in 0..n {
            for i in 0..n {
                let at = lat.idx(i, j, k);
                let boundary = i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
                if boundary {
                    slab[j * n + i] = x[at];
                    continue;
                }
                let mut acc = 6.0 * x[at];
                if i > 1 {
                    acc -= x[at - 1];
                }
                if i < n - 2 {
                    acc -= x[at + 1];
                }
                if j > 1 {
                    acc -= x[at - n];
                }
                if j < n - 2 {
                    acc -= x[at + n];
                }
                if k > 1 {
                    acc -= x[at - n * n];
                }
                if k < n - 2 {
                    acc -= x[at + n * n];
                }
                slab[j * n + i] = acc;
            }
        }
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn conjugate_gradient(lat: &Lattice, b: &[f64], options: &PoissonOptions) -> Result<Vec<f64>> {
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr = dot(&r, &r);
    for _ in 0..options.max_iterations {
        if rr.sqrt() <= options.tolerance * b_norm {
            return Ok(x);
        }
        apply_laplacian(lat, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        x.par_iter_mut()
            .zip(r.par_iter_mut())
            .zip(p.par_iter().zip(ap.par_iter()))
            .for_each(|((xi, ri), (pi, api))| {
                *xi += alpha * pi;
                *ri -= alpha * api;
            });
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        p.par_iter_mut()
            .zip(r.par_iter())
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    let residual = rr.sqrt() / b_norm;
    if residual <= options.tolerance {
        return Ok(x);
    }
    Err(GeometryError::NotConverged {
        iterations: options.max_iterations,
        residual,
    })
}
