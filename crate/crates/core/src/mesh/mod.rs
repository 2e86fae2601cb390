//! Object models: triangle meshes, surface point sets and nearest-neighbor search.

mod kdtree;
pub mod ply;
pub mod shapes;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use kdtree::{brute_force_nearest, Neighbor, NnIndex};
pub use ply::{load_ply, write_ply, PlyEncoding, PlyError};

/// Vertex count up to which [`mesh_diameter`] runs the plain all-pairs loop.
pub const EXACT_DIAMETER_LIMIT: usize = 5000;

/// Default number of surface samples used for metrics and losses.
pub const DEFAULT_SAMPLE_COUNT: usize = 2048;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh needs at least 2 vertices for a diameter, got {0}")]
    TooFewVertices(usize),
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("mesh surface has zero area")]
    ZeroArea,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    InvalidFaceIndex { face: usize, index: usize, count: usize },
    #[error("sample count must be at least 1")]
    ZeroSamples,
}

/// Triangle mesh in millimetres with its cached diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    diameter: f64,
}

impl Mesh {
    /// Validates face indices and computes the diameter.
    ///
    /// Meshes with fewer than two vertices get diameter 0.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= vertices.len() {
                    return Err(MeshError::InvalidFaceIndex { face: fi, index: idx as usize, count: vertices.len() });
                }
            }
        }
        let diameter = if vertices.len() >= 2 { diameter_of(&vertices) } else { 0.0 };
        Ok(Self { vertices, faces, diameter })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Maximum pairwise vertex distance (mm).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Radius of the smallest origin-centered sphere containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| triangle_area(&self.triangle(f))).sum()
    }

    /// Returns a copy with every vertex multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Mesh {
        let vertices: Vec<_> = self.vertices.iter().map(|v| v * factor).collect();
        Mesh { vertices, faces: self.faces.clone(), diameter: self.diameter * factor.abs() }
    }

    /// The raw vertices as a point set.
    pub fn vertex_points(&self) -> Result<PointSet, MeshError> {
        PointSet::new(self.vertices.clone())
    }
}

fn triangle_area(t: &[Vector3<f64>; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

/// Non-empty set of 3D model points (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vector3<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, MeshError> {
        if points.is_empty() {
            return Err(MeshError::EmptyPointSet);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &crate::geometry::Pose) -> PointSet {
        PointSet { points: self.points.iter().map(|p| pose.transform_point(p)).collect() }
    }
}

#[inline]
pub(crate) fn dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Maximum pairwise Euclidean distance between vertices.
pub fn mesh_diameter(mesh: &Mesh) -> Result<f64, MeshError> {
    if mesh.vertices.len() < 2 {
        return Err(MeshError::TooFewVertices(mesh.vertices.len()));
    }
    Ok(mesh.diameter)
}

fn diameter_of(points: &[Vector3<f64>]) -> f64 {
    if points.len() <= EXACT_DIAMETER_LIMIT {
        diameter_all_pairs(points)
    } else {
        diameter_pruned(points)
    }
}

fn diameter_all_pairs(points: &[Vector3<f64>]) -> f64 {
    crate::par::max_range(points.len(), |i| points[i + 1..].iter().map(|q| dist(&points[i], q)).fold(0.0, f64::max))
}

/// Exact diameter for large vertex sets.
///
/// Any pair `(i, j)` is bounded by `r_i + r_j` where `r` is the distance to
/// the bounding-box center. Walking points by decreasing `r` lets every pair
/// whose bound cannot beat the best distance found so far be skipped. Every
/// distance that is evaluated uses the same arithmetic as the all-pairs loop,
/// so the result is bit-identical to it.
fn diameter_pruned(points: &[Vector3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) * 0.5;
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - center).norm(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    // Seed the lower bound with a few farthest-point sweeps.
    let mut best = 0.0f64;
    let mut anchor = order[0].1;
    for _ in 0..4 {
        let (far, d) = points.iter().enumerate().map(|(j, q)| (j, dist(&points[anchor], q))).fold((anchor, 0.0), |acc, x| {
            if x.1 > acc.1 {
                x
            } else {
                acc
            }
        });
        best = best.max(d);
        anchor = far;
    }

    let n = order.len();
    for a in 0..n - 1 {
        let (ra, ia) = order[a];
        // Allow a small slack so rounding in r never drops a pair that ties.
        let slack = 1e-12 * (ra + 1.0);
        if ra + order[a + 1].0 + slack < best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if ra + rb + slack < best {
                break;
            }
            let (i, j) = if ia < ib { (ia, ib) } else { (ib, ia) };
            best = best.max(dist(&points[i], &points[j]));
        }
    }
    best
}

/// Area-weighted uniform surface samples, deterministic for a given seed.
pub fn sample_points(mesh: &Mesh, n: usize, seed: u64) -> Result<PointSet, MeshError> {
    sample_points_with_faces(mesh, n, seed).map(|(p, _)| p)
}

/// Like [`sample_points`] but also returns the source face of every sample.
pub fn sample_points_with_faces(mesh: &Mesh, n: usize, seed: u64) -> Result<(PointSet, Vec<usize>), MeshError> {
    if n == 0 {
        return Err(MeshError::ZeroSamples);
    }
    if mesh.faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += triangle_area(&mesh.triangle(f));
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(MeshError::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let mut u: f64 = rng.random();
        let mut v: f64 = rng.random();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
        faces.push(face);
    }
    Ok((PointSet { points }, faces))
}
