//! Static 3D k-d tree for exact k-nearest queries.
//!
//! Results are ordered by `(squared distance, index)`, so equidistant points
//! resolve to the lower index and queries agree exactly with a full sort.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::Vec3;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Implicit balanced tree: `order[lo..hi]` is a subtree whose median
    /// `order[(lo + hi) / 2]` splits on `axis_of(depth)`.
    order: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build_recursive(&points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest points to `query`, nearest first, limited to
    /// points within `max_dist` when given.
    pub fn nearest(&self, query: &Vec3, k: usize, max_dist: Option<f64>) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let limit2 = max_dist.map_or(f64::INFINITY, |d| d * d);
        self.search(query, k, limit2, 0, self.order.len(), 0, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        found.into_iter().map(|c| c.index).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        query: &Vec3,
        k: usize,
        limit2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let index = self.order[mid];
        let p = &self.points[index];
        let dist2 = (p - query).norm_squared();
        if dist2 <= limit2 {
            let c = Candidate { dist2, index };
            if heap.len() < k {
                heap.push(c);
            } else if heap.peek().is_some_and(|worst| c < *worst) {
                heap.pop();
                heap.push(c);
            }
        }

        let axis = depth % 3;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, k, limit2, near.0, near.1, depth + 1, heap);
        // Ties must be explored too: an equidistant point with a lower index
        // on the far side still outranks the current worst.
        let plane2 = diff * diff;
        let worst = if heap.len() < k {
            limit2
        } else {
            heap.peek().map_or(limit2, |w| w.dist2)
        };
        if plane2 <= worst {
            self.search(query, k, limit2, far.0, far.1, depth + 1, heap);
        }
    }
}

fn build_recursive(points: &[Vec3], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut right[1..], depth + 1);
}
