use crate::Vec3;
use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use std::num::NonZero;

/// Static k-nearest-neighbour index over a point set.
pub struct NeighborIndex {
    tree: ImmutableKdTree<f64, u64, 3, 32>,
    len: usize,
}

impl NeighborIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&coords),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `k` nearest points to `query` as `(index, distance)` pairs sorted
    /// by distance, skipping `exclude`.
    pub fn nearest(&self, query: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let want = (k + usize::from(exclude.is_some())).min(self.len);
        let Some(n) = NonZero::new(want) else {
            return Vec::new();
        };
        self.tree
            .nearest_n::<SquaredEuclidean>(&[query.x, query.y, query.z], n)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance.sqrt()))
            .filter(|(i, _)| Some(*i) != exclude)
            .take(k)
            .collect()
    }

    pub fn nearest_one(&self, query: &Vec3) -> Option<usize> {
        self.nearest(query, 1, None).first().map(|&(i, _)| i)
    }
}
