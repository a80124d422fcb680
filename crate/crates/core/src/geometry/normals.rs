use super::{GeometryError, NeighborIndex, PointCloud, Result};
use crate::Vec3;
use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

/// Relative eigenvalue floor below which a neighbourhood counts as rank < 2.
const RANK_TOLERANCE: f64 = 1e-10;

/// Estimates per-point normals from the `k_neighbors`-NN covariance.
///
/// Each normal is the eigenvector of the smallest eigenvalue, flipped to face
/// the camera at the origin. Neighbourhoods whose covariance has rank < 2 get
/// the normal `(0, 0, −1)` and are flagged in [`PointCloud::degenerate`].
pub fn estimate_normals(cloud: &PointCloud, k_neighbors: usize) -> Result<PointCloud> {
    if k_neighbors < 2 || cloud.len() < k_neighbors + 1 {
        return Err(GeometryError::TooFewPoints {
            needed: k_neighbors.max(2) + 1,
            got: cloud.len(),
        });
    }
    let index = NeighborIndex::new(&cloud.points);
    let estimates: Vec<(Vec3, bool)> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut hood: Vec<Vec3> = index
                .nearest(p, k_neighbors, Some(i))
                .into_iter()
                .map(|(j, _)| cloud.points[j])
                .collect();
            hood.push(*p);
            local_normal(&hood, p)
        })
        .collect();
    let mut out = cloud.clone();
    out.normals = Some(estimates.iter().map(|e| e.0).collect());
    out.degenerate = estimates.iter().map(|e| e.1).collect();
    Ok(out)
}

fn local_normal(hood: &[Vec3], at: &Vec3) -> (Vec3, bool) {
    let n = hood.len() as f64;
    let centroid = hood.iter().sum::<Vec3>() / n;
    let cov = hood.iter().fold(Matrix3::zeros(), |acc, q| {
        let d = q - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= RANK_TOLERANCE * largest {
        return (Vec3::new(0.0, 0.0, -1.0), true);
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.dot(&(-at)) < 0.0 {
        normal = -normal;
    }
    (normal, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_normals_face_camera() {
        let pts: Vec<Vec3> = (0..400)
            .map(|i| Vec3::new((i % 20) as f64 * 0.1 - 1.0, (i / 20) as f64 * 0.1 - 1.0, 5.0))
            .collect();
        let pc = estimate_normals(&PointCloud::new(pts, vec![[0.0; 3]; 400]), 8).unwrap();
        for n in pc.normals.unwrap() {
            assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-3);
        }
        assert!(pc.degenerate.iter().all(|d| !d));
    }

    #[test]
    fn collinear_points_are_flagged() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 0.0, 2.0)).collect();
        let pc = estimate_normals(&PointCloud::new(pts, vec![[0.0; 3]; 20]), 4).unwrap();
        assert!(pc.degenerate.iter().all(|&d| d));
        for n in pc.normals.unwrap() {
            assert_eq!(n, Vec3::new(0.0, 0.0, -1.0));
        }
    }

    #[test]
    fn too_few_points_for_k() {
        let pc = PointCloud::new(vec![Vec3::new(0.0, 0.0, 1.0); 3], vec![[0.0; 3]; 3]);
        assert!(estimate_normals(&pc, 5).is_err());
    }
}
