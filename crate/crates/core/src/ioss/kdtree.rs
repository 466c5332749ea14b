//! Static kd-tree for nearest-neighbour distance queries in low dimension.

/// Points are stored in an implicit balanced layout: the median of every
/// index range is its splitting node.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    pts: Vec<f64>,
}

impl KdTree {
    /// Builds from row-major points of dimension `dim`.
    pub fn new(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut idx: Vec<usize> = (0..n).collect();
        build(&mut idx, points, dim, 0);
        let mut pts = Vec::with_capacity(points.len());
        for &i in &idx {
            pts.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        Self { dim, pts }
    }

    pub fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Squared distance from `q` to its nearest point.
    pub fn nearest_sq(&self, q: &[f64]) -> f64 {
        let mut best = Knn::new(1);
        self.search(0, self.len(), 0, q, &mut best);
        best.worst()
    }

    /// Squared distance from `q` to its k-th nearest point (k ≥ 1).
    pub fn kth_nearest_sq(&self, q: &[f64], k: usize) -> f64 {
        let k = k.clamp(1, self.len());
        let mut best = Knn::new(k);
        self.search(0, self.len(), 0, q, &mut best);
        best.worst()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    fn search(&self, lo: usize, hi: usize, depth: usize, q: &[f64], best: &mut Knn) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.point(mid);
        best.offer(sq_dist(p, q));
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, q, best);
        if diff * diff < best.worst() {
            self.search(far.0, far.1, depth + 1, q, best);
        }
    }
}

fn build(idx: &mut [usize], data: &[f64], dim: usize, depth: usize) {
    if idx.len() <= 1 {
        return;
    }
    let axis = depth % dim;
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| data[a * dim + axis].total_cmp(&data[b * dim + axis]));
    let (left, right) = idx.split_at_mut(mid);
    build(left, data, dim, depth + 1);
    build(&mut right[1..], data, dim, depth + 1);
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The k smallest distances seen so far, kept sorted.
struct Knn {
    k: usize,
    d: Vec<f64>,
}

impl Knn {
    fn new(k: usize) -> Self {
        Self {
            k,
            d: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.d.len() < self.k {
            f64::INFINITY
        } else {
            self.d[self.k - 1]
        }
    }

    fn offer(&mut self, v: f64) {
        if v >= self.worst() {
            return;
        }
        let pos = self.d.partition_point(|&x| x <= v);
        self.d.insert(pos, v);
        self.d.truncate(self.k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[f64], dim: usize, q: &[f64], k: usize) -> f64 {
        let mut d: Vec<f64> = points.chunks(dim).map(|p| sq_dist(p, q)).collect();
        d.sort_by(f64::total_cmp);
        d[k.clamp(1, d.len()) - 1]
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            dim in 1usize..4,
            raw in proptest::collection::vec(0.0f64..1.0, 3..300),
            q in proptest::collection::vec(-0.2f64..1.2, 3),
            k in 1usize..6,
        ) {
            let n = raw.len() / dim;
            prop_assume!(n >= 1);
            let pts = &raw[..n * dim];
            let tree = KdTree::new(pts, dim);
            let q = &q[..dim];
            prop_assert_eq!(tree.nearest_sq(q), brute(pts, dim, q, 1));
            prop_assert_eq!(tree.kth_nearest_sq(q, k), brute(pts, dim, q, k));
        }
    }

    #[test]
    fn handles_duplicates() {
        let pts = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.1, 0.9];
        let tree = KdTree::new(&pts, 2);
        assert_eq!(tree.kth_nearest_sq(&[0.5, 0.5], 3), 0.0);
        assert!((tree.kth_nearest_sq(&[0.5, 0.5], 4) - 0.32).abs() < 1e-15);
    }
}
