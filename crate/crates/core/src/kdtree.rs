//! Static 3-D k-d tree for exact nearest-neighbor queries.

use nalgebra::Vector3;

/// Exact nearest-neighbor search over a static 3-D point set.
pub(crate) struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree {
            points,
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let pts = self.points;
        idx.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes.push(KdNode {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    pub(crate) fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        if let Some(r) = self.root {
            self.search(r, q, &mut best);
        }
        best.sqrt()
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best_sq: &mut f64) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        let d = (p - q).norm_squared();
        if d < *best_sq {
            *best_sq = d;
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, best_sq);
        }
        if diff * diff <= *best_sq {
            if let Some(c) = far {
                self.search(c, q, best_sq);
            }
        }
    }

    /// Indices and distances of the `k` nearest points, closest first. Ties
    /// are broken by the lower index.
    pub(crate) fn nearest_k(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if let (Some(r), true) = (self.root, k > 0) {
            self.search_k(r, q, k, &mut best);
        }
        best.into_iter().map(|(d, i)| (i, d.sqrt())).collect()
    }

    fn search_k(&self, node: usize, q: &Vector3<f64>, k: usize, best: &mut Vec<(f64, usize)>) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        let d = (p - q).norm_squared();
        let key = (d, n.point);
        if best.len() < k || key < *best.last().unwrap() {
            let pos = best.partition_point(|e| *e < key);
            best.insert(pos, key);
            best.truncate(k);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search_k(c, q, k, best);
        }
        if best.len() < k || diff * diff <= best.last().unwrap().0 {
            if let Some(c) = far {
                self.search_k(c, q, k, best);
            }
        }
    }
}
