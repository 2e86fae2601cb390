use nalgebra::Vector3;

use super::{MeshError, PointSet};

const LEAF_SIZE: usize = 16;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the point set the index was built from.
    pub index: usize,
    pub point: Vector3<f64>,
    /// Euclidean distance in mm.
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

/// Tight bounding box of the points below a node.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: [f64; 3],
    hi: [f64; 3],
}

/// Static k-d tree over a [`PointSet`].
///
/// Queries return the same point as a linear scan: among points at exactly
/// the minimal distance the one with the lowest original index wins.
#[derive(Debug, Clone)]
pub struct NnIndex {
    coords: Vec<[f64; 3]>,
    /// The same coordinates split per axis, for vectorized leaf scans.
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
    bounds: Vec<Bounds>,
}

#[inline]
fn dist_sq(a: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = a[0] - q[0];
    let dy = a[1] - q[1];
    let dz = a[2] - q[2];
    dx * dx + dy * dy + dz * dz
}

impl NnIndex {
    pub fn build(points: &PointSet) -> Result<Self, MeshError> {
        Self::from_points(points.points())
    }

    pub fn from_points(points: &[Vector3<f64>]) -> Result<Self, MeshError> {
        if points.is_empty() {
            return Err(MeshError::EmptyPointSet);
        }
        let mut items: Vec<([f64; 3], usize)> = points.iter().enumerate().map(|(i, p)| ([p.x, p.y, p.z], i)).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        let mut bounds = Vec::with_capacity(nodes.capacity());
        build_node(&mut items, 0, &mut nodes, &mut bounds);
        let (coords, ids): (Vec<[f64; 3]>, Vec<usize>) = items.into_iter().unzip();
        let xs = coords.iter().map(|c| c[0]).collect();
        let ys = coords.iter().map(|c| c[1]).collect();
        let zs = coords.iter().map(|c| c[2]).collect();
        Ok(Self { coords, xs, ys, zs, ids, nodes, bounds })
    }

    /// Original indices of the stored points in tree (leaf) order. Queries
    /// issued in this order walk similar paths one after another.
    pub fn tree_order(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn nearest(&self, q: &Vector3<f64>) -> Neighbor {
        let best = self.query(q);
        let c = self.coords[best.2];
        Neighbor { index: best.1, point: Vector3::new(c[0], c[1], c[2]), distance: best.0.sqrt() }
    }

    /// Distance from `q` to its nearest stored point.
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        self.nearest_distance_sq(q).sqrt()
    }

    /// Squared distance from `q` to its nearest stored point. Skips the
    /// tie-breaking bookkeeping of [`NnIndex::nearest`].
    pub fn nearest_distance_sq(&self, q: &Vector3<f64>) -> f64 {
        self.nearest_distance_sq_within(q, f64::INFINITY)
    }

    /// Like [`NnIndex::nearest_distance_sq`], given an upper bound that is
    /// known to hold, e.g. the squared distance to any stored point. A tight
    /// bound prunes most of the tree up front.
    pub fn nearest_distance_sq_within(&self, q: &Vector3<f64>, upper: f64) -> f64 {
        let mut best = upper;
        self.search_distance(0, &[q.x, q.y, q.z], &mut best);
        best
    }

    fn query(&self, q: &Vector3<f64>) -> (f64, usize, usize) {
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, usize::MAX, 0usize);
        self.search(0, &q, &mut best);
        best
    }

    // best = (squared distance, original id, slot in coords). Children are
    // visited nearest box first and skipped once their box is farther than
    // the best point found.
    fn search(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d = dist_sq(&self.coords[slot], q);
                    if d <= best.0 {
                        let id = self.ids[slot];
                        if d < best.0 || id < best.1 {
                            *best = (d, id, slot);
                        }
                    }
                }
            }
            Node::Split { left, right } => {
                let (dl, dr) = (box_dist_sq(&self.bounds[left], q), box_dist_sq(&self.bounds[right], q));
                let ((near, dn), (far, df)) = if dl <= dr { ((left, dl), (right, dr)) } else { ((right, dr), (left, dl)) };
                if dn <= best.0 {
                    self.search(near, q, best);
                }
                if df <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

impl NnIndex {
    fn search_distance(&self, node: usize, q: &[f64; 3], best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let (xs, ys, zs) = (&self.xs[start..end], &self.ys[start..end], &self.zs[start..end]);
                let mut m = *best;
                for i in 0..xs.len() {
                    let (dx, dy, dz) = (xs[i] - q[0], ys[i] - q[1], zs[i] - q[2]);
                    m = m.min(dx * dx + dy * dy + dz * dz);
                }
                *best = m;
            }
            Node::Split { left, right } => {
                let (dl, dr) = (box_dist_sq(&self.bounds[left], q), box_dist_sq(&self.bounds[right], q));
                let ((near, dn), (far, df)) = if dl <= dr { ((left, dl), (right, dr)) } else { ((right, dr), (left, dl)) };
                if dn < *best {
                    self.search_distance(near, q, best);
                }
                if df < *best {
                    self.search_distance(far, q, best);
                }
            }
        }
    }
}

/// Squared distance from `q` to an axis-aligned box `[lo, hi]`.
#[inline]
fn box_dist_sq(b: &Bounds, q: &[f64; 3]) -> f64 {
    let mut d = 0.0;
    for ((lo, hi), q) in b.lo.iter().zip(&b.hi).zip(q) {
        let e = (lo - q).max(q - hi).max(0.0);
        d += e * e;
    }
    d
}

fn build_node(items: &mut [([f64; 3], usize)], offset: usize, nodes: &mut Vec<Node>, bounds: &mut Vec<Bounds>) -> usize {
    let id = nodes.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (p, _) in items.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    bounds.push(Bounds { lo, hi });
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    // Small or fully coincident sets become leaves.
    if items.len() <= LEAF_SIZE || hi[axis] - lo[axis] == 0.0 {
        nodes.push(Node::Leaf { start: offset, end: offset + items.len() });
        return id;
    }
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = items.split_at_mut(mid);
    let left = build_node(l, offset, nodes, bounds);
    let right = build_node(r, offset + mid, nodes, bounds);
    nodes[id] = Node::Split { left, right };
    id
}

/// Linear-scan nearest neighbor with the same tie rule as [`NnIndex`].
pub fn brute_force_nearest(points: &[Vector3<f64>], q: &Vector3<f64>) -> Option<Neighbor> {
    let qa = [q.x, q.y, q.z];
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(&[p.x, p.y, p.z], &qa);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(d, i)| Neighbor { index: i, point: points[i], distance: d.sqrt() })
}
