use crate::Vec3;
use std::collections::HashMap;

#[path = "mc_table.rs"]
mod table;

/// Scalar samples on a regular node grid, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: f64) -> Self {
        Self {
            dims,
            origin,
            spacing,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Trilinear interpolation; positions outside the grid clamp to the
    /// boundary cell.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let g = (p - self.origin) / self.spacing;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let hi = (self.dims[a] - 1) as f64;
            let c = g[a].clamp(0.0, hi);
            let b = (c.floor() as usize).min(self.dims[a].saturating_sub(2));
            base[a] = b;
            frac[a] = c - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
            if w != 0.0 {
                acc += w * self.at(base[0] + di, base[1] + dj, base[2] + dk);
            }
        }
        acc
    }
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the `iso` level set as a triangle mesh. Nodes with value below
/// `iso` are inside; faces wind counter-clockwise seen from the outside.
/// Vertices are shared along grid edges, so a closed level set yields a
/// closed mesh.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let [nx, ny, nz] = grid.dims;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    if nx < 2 || ny < 2 || nz < 2 {
        return (vertices, faces);
    }
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut values = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    values[c] = grid.at(i + off[0], j + off[1], k + off[2]);
                    if values[c] < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &table::TRIANGLE_TABLE[case];
                let mut local = [usize::MAX; 12];
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let mut ids = [0usize; 3];
                    for (slot, &e) in ids.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == usize::MAX {
                            let [a, b] = EDGES[e];
                            let (pa, pb) = (CORNERS[a], CORNERS[b]);
                            let lo = [
                                i + pa[0].min(pb[0]),
                                j + pa[1].min(pb[1]),
                                k + pa[2].min(pb[2]),
                            ];
                            let axis = (0..3).find(|&x| pa[x] != pb[x]).unwrap() as u8;
                            let key = (grid.index(lo[0], lo[1], lo[2]), axis);
                            local[e] = *edge_vertex.entry(key).or_insert_with(|| {
                                let (va, vb) = (values[a], values[b]);
                                let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                                let qa = grid.node_position(i + pa[0], j + pa[1], k + pa[2]);
                                let qb = grid.node_position(i + pb[0], j + pb[1], k + pb[2]);
                                vertices.push(qa + (qb - qa) * t);
                                vertices.len() - 1
                            });
                        }
                        *slot = local[e];
                    }
                    faces.push([ids[0], ids[2], ids[1]]);
                }
            }
        }
    }
    (vertices, faces)
}
