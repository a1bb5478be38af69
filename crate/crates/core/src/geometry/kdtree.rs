// Static 3-d tree over a point slice.
//
// Ordering of neighbours is by (squared distance, point index), so ties always
// resolve to the lower index and results are reproducible across platforms.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Immutable k-d tree; queries are read-only and may run concurrently.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Original point index for each slot of `points`.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(positions: &[Point3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..positions.len()).collect();
        let mut nodes = Vec::new();
        if !positions.is_empty() {
            build_node(positions, &mut order, 0, &mut nodes);
        }
        let points = order.iter().map(|&i| positions[i].coords.into()).collect();
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points sorted by `(dist2, index)`, optionally skipping one index.
    pub fn knn(&self, query: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, &q, k, exclude, &mut heap);
        heap.into_sorted_vec()
    }

    pub fn nearest(&self, query: &Point3<f64>) -> Option<Neighbor> {
        self.knn(query, 1, None).into_iter().next()
    }

    /// Number of points within Euclidean distance `radius` (inclusive).
    pub fn count_within(&self, query: &Point3<f64>, radius: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        let q = [query.x, query.y, query.z];
        self.count_rec(0, &q, radius * radius)
    }

    fn knn_rec(
        &self,
        node: usize,
        q: &[f64; 3],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let index = self.order[slot];
                    if Some(index) == exclude {
                        continue;
                    }
                    let cand = Neighbor { index, dist2: dist2(q, &self.points[slot]) };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, exclude, heap);
                // Equal distance still has to be visited: a lower index may tie.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_rec(far, q, k, exclude, heap);
                }
            }
        }
    }

    fn count_rec(&self, node: usize, q: &[f64; 3], r2: f64) -> usize {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                self.points[start..end].iter().filter(|p| dist2(q, p) <= r2).count()
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                let mut n = self.count_rec(near, q, r2);
                if diff * diff <= r2 {
                    n += self.count_rec(far, q, r2);
                }
                n
            }
        }
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Builds the subtree for `order[..]` (a window into the full index array);
/// returns the node id. Leaves store absolute slot ranges.
fn build_node(positions: &[Point3<f64>], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset, end: offset + order.len() });
        return id;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(positions[i][a]);
            hi[a] = hi[a].max(positions[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        positions[a][axis].total_cmp(&positions[b][axis]).then(a.cmp(&b))
    });
    let value = positions[order[mid]][axis];

    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(positions, left_part, offset, nodes);
    let right = build_node(positions, right_part, offset + mid, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(points: &[Point3<f64>], q: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = (0..700)
            .map(|_| Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>() * 0.1))
            .collect();
        let tree = KdTree::build(&pts);
        for (i, p) in pts.iter().enumerate().step_by(7) {
            for k in [1, 5, 20] {
                let got: Vec<_> = tree.knn(p, k, Some(i)).iter().map(|n| n.index).collect();
                let want: Vec<_> = brute_knn(&pts, p, k, Some(i)).iter().map(|n| n.0).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Integer lattice with duplicates: many exactly equal distances.
        let mut pts = Vec::new();
        for z in 0..4 {
            for y in 0..5 {
                for x in 0..5 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        pts.extend_from_within(10..30);
        let tree = KdTree::build(&pts);
        for (i, p) in pts.iter().enumerate() {
            for k in [1, 6, 13, 27] {
                let got: Vec<_> = tree.knn(p, k, Some(i)).iter().map(|n| (n.index, n.dist2)).collect();
                assert_eq!(got, brute_knn(&pts, p, k, Some(i)));
            }
        }
    }

    #[test]
    fn radius_count() {
        let pts: Vec<_> = (0..50).map(|i| Point3::new(i as f64 * 0.5, 0.0, 0.0)).collect();
        let tree = KdTree::build(&pts);
        assert_eq!(tree.count_within(&Point3::new(10.0, 0.0, 0.0), 1.0), 5);
        assert_eq!(tree.count_within(&Point3::new(-5.0, 0.0, 0.0), 1.0), 0);
        assert_eq!(tree.nearest(&Point3::new(0.3, 0.0, 0.0)).unwrap().index, 1);
    }

    #[test]
    fn empty_and_tiny() {
        let tree = KdTree::build(&[]);
        assert!(tree.knn(&Point3::origin(), 3, None).is_empty());
        assert_eq!(tree.count_within(&Point3::origin(), 1.0), 0);
        let tree = KdTree::build(&[Point3::origin()]);
        assert_eq!(tree.knn(&Point3::origin(), 3, None).len(), 1);
        assert!(tree.knn(&Point3::origin(), 3, Some(0)).is_empty());
    }
}
