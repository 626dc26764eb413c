//! Exact nearest-neighbour queries over a fixed point set.

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::Point3;
use rayon::prelude::*;

pub struct NearestIndex {
    tree: ImmutableKdTree<f64, u32, 3, 32>,
    len: usize,
}

impl NearestIndex {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        NearestIndex {
            tree: ImmutableKdTree::new_from_slice(&raw),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index and squared distance of the closest stored point.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.len == 0 {
            return None;
        }
        let nn = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        Some((nn.item as usize, nn.distance))
    }

    pub fn nearest_all(&self, queries: &[Point3<f64>]) -> Vec<Option<(usize, f64)>> {
        queries.par_iter().map(|q| self.nearest(q)).collect()
    }

    /// Euclidean distance from every query to its nearest stored point.
    pub fn distances(&self, queries: &[Point3<f64>]) -> Vec<f64> {
        queries
            .par_iter()
            .map(|q| self.nearest(q).map_or(f64::INFINITY, |(_, d)| d.sqrt()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts: Vec<Point3<f64>> = (0..2000)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random::<f64>().floor()))
            .collect();
        // Many shared coordinates on one axis, as in layered clouds.
        pts.extend((0..500).map(|k| Point3::new(k as f64 * 0.01, 0.0, 3.0)));
        let index = NearestIndex::new(&pts);
        for _ in 0..300 {
            let q = Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..4.0));
            let (_, d) = index.nearest(&q).unwrap();
            let brute = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
        }
    }

    #[test]
    fn empty_index() {
        let index = NearestIndex::new(&[]);
        assert!(index.nearest(&Point3::origin()).is_none());
    }
}
