use super::{GeometryError, NeighborIndex, PointCloud, Result};
use rayon::prelude::*;

/// Mean distance from every point to its `k` nearest neighbours.
pub(crate) fn mean_neighbor_distances(cloud: &PointCloud, k: usize) -> Vec<f64> {
    let index = NeighborIndex::new(&cloud.points);
    cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = index.nearest(p, k, Some(i));
            nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len() as f64
        })
        .collect()
}

/// Statistical outlier removal.
///
/// A point survives iff its mean distance to its `k_neighbors` nearest
/// neighbours is at most `mean + std_ratio · std` of that statistic over the
/// whole cloud (population standard deviation). Order and attributes of the
/// survivors are preserved.
pub fn remove_outliers(cloud: &PointCloud, k_neighbors: usize, std_ratio: f64) -> Result<PointCloud> {
    if k_neighbors == 0 || cloud.len() < k_neighbors + 1 {
        return Err(GeometryError::TooFewPoints {
            needed: k_neighbors.max(1) + 1,
            got: cloud.len(),
        });
    }
    let stat = mean_neighbor_distances(cloud, k_neighbors);
    let n = stat.len() as f64;
    let mean = stat.iter().sum::<f64>() / n;
    let var = stat.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean + std_ratio * var.sqrt();
    let keep: Vec<bool> = stat.iter().map(|&d| d <= threshold).collect();
    Ok(cloud.select(&keep))
}
