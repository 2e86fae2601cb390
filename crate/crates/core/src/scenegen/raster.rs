//! Footprint z-buffer.
//!
//! A triangle covers a pixel when it overlaps the pixel's unit square with
//! positive area. The stored depth is the nearest point of that overlap.
//! Inverse depth is affine in screen space, so that minimum is attained at a
//! vertex of the triangle clipped to the square. One consequence is that
//! every surface point projecting into a pixel lies at or behind the
//! rendered depth of that pixel. Without culling, each pixel keeps the
//! nearest triangle (ties go to the lower face index). Triangles are clipped
//! against a near plane in camera space before projection.

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::Vector3;

use super::SceneGenError;
use crate::bop_io::{depth_mm_to_raw, DepthImage};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::mesh::Mesh;

/// Camera-space near plane, mm.
pub const NEAR_PLANE_MM: f64 = 1.0;
/// Overlaps smaller than this (px²) do not count as coverage.
const AREA_EPS: f64 = 1e-12;

/// One mesh placed in the camera frame.
#[derive(Debug, Clone, Copy)]
pub struct RenderInstance<'a> {
    pub mesh: &'a Mesh,
    /// Model-to-camera transform.
    pub pose: Pose,
}

/// An instance rendered alone, restricted to its screen bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLayer {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    depth: Vec<f64>,
    face: Vec<u32>,
    /// `|cos|` between each face normal and the direction to the camera.
    face_shading: Vec<f64>,
}

impl InstanceLayer {
    fn empty() -> Self {
        Self { x0: 0, y0: 0, width: 0, height: 0, depth: Vec::new(), face: Vec::new(), face_shading: Vec::new() }
    }

    fn offset(&self, x: u32, y: u32) -> Option<usize> {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.width || y >= self.y0 + self.height {
            return None;
        }
        Some(((y - self.y0) * self.width + (x - self.x0)) as usize)
    }

    /// Unoccluded depth in mm, `None` where the instance is absent.
    pub fn depth(&self, x: u32, y: u32) -> Option<f64> {
        self.offset(x, y).map(|i| self.depth[i]).filter(|d| d.is_finite())
    }

    pub fn face(&self, x: u32, y: u32) -> Option<u32> {
        self.offset(x, y).filter(|&i| self.depth[i].is_finite()).map(|i| self.face[i])
    }

    pub fn pixel_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Composite of several instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub width: u32,
    pub height: u32,
    /// Depth in mm, 0 where empty.
    depth: Vec<f64>,
    /// `i + 1` for instance `i`, 0 for background.
    instance: Vec<u32>,
    face: Vec<u32>,
    layers: Vec<InstanceLayer>,
}

impl Rendering {
    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn depth(&self, x: u32, y: u32) -> f64 {
        self.depth[self.idx(x, y)]
    }

    /// Instance index + 1 at a pixel, 0 for background.
    pub fn instance(&self, x: u32, y: u32) -> u32 {
        self.instance[self.idx(x, y)]
    }

    pub fn depth_map(&self) -> &[f64] {
        &self.depth
    }

    pub fn instance_map(&self) -> &[u32] {
        &self.instance
    }

    pub fn layers(&self) -> &[InstanceLayer] {
        &self.layers
    }

    pub fn visible_count(&self, i: usize) -> usize {
        let id = i as u32 + 1;
        self.instance.iter().filter(|&&v| v == id).count()
    }

    pub fn unoccluded_count(&self, i: usize) -> usize {
        self.layers[i].pixel_count()
    }

    /// The instance rendered alone: 255 where it covers the pixel.
    pub fn unoccluded_mask(&self, i: usize) -> GrayImage {
        let layer = &self.layers[i];
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if layer.depth(x, y).is_some() { 255 } else { 0 }]))
    }

    /// Pixels where the instance is the nearest surface.
    pub fn visible_mask(&self, i: usize) -> GrayImage {
        let id = i as u32 + 1;
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.instance(x, y) == id { 255 } else { 0 }]))
    }

    pub fn depth_image(&self, depth_scale: f64) -> DepthImage {
        DepthImage::from_fn(self.width, self.height, |x, y| Luma([depth_mm_to_raw(self.depth(x, y), depth_scale)]))
    }

    /// Flat shading: `color · (ambient + (1 − ambient)·|n·v|)` over a gray
    /// background.
    pub fn shade_rgb(&self, colors: &[[u8; 3]], background: [u8; 3]) -> RgbImage {
        const AMBIENT: f64 = 0.25;
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let id = self.instance(x, y);
            if id == 0 {
                return Rgb(background);
            }
            let i = id as usize - 1;
            let lambert = self.layers[i].face_shading[self.face[self.idx(x, y)] as usize];
            let f = AMBIENT + (1.0 - AMBIENT) * lambert;
            let c = colors[i];
            Rgb([0, 1, 2].map(|ch| (c[ch] as f64 * f).round().clamp(0.0, 255.0) as u8))
        })
    }
}

/// Screen-space vertex: pixel `u`, `v` and inverse depth.
type Sv = [f64; 3];

#[derive(Clone, Copy)]
struct Poly {
    pts: [Sv; 12],
    len: usize,
}

impl Poly {
    fn from_slice(p: &[Sv]) -> Self {
        let mut pts = [[0.0; 3]; 12];
        pts[..p.len()].copy_from_slice(p);
        Self { pts, len: p.len() }
    }

    fn points(&self) -> &[Sv] {
        &self.pts[..self.len]
    }

    /// Keeps the half-plane `sign · (p[axis] − bound) ≥ 0`.
    fn clip(&self, axis: usize, bound: f64, sign: f64) -> Poly {
        let mut out = Poly { pts: [[0.0; 3]; 12], len: 0 };
        let n = self.len;
        for i in 0..n {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % n];
            let da = sign * (a[axis] - bound);
            let db = sign * (b[axis] - bound);
            if da >= 0.0 {
                out.pts[out.len] = a;
                out.len += 1;
            }
            if (da >= 0.0) != (db >= 0.0) {
                let t = da / (da - db);
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = a[k] + t * (b[k] - a[k]);
                }
                p[axis] = bound;
                out.pts[out.len] = p;
                out.len += 1;
            }
        }
        out
    }

    fn area(&self) -> f64 {
        let p = self.points();
        let mut a = 0.0;
        for i in 0..p.len() {
            let (q, r) = (p[i], p[(i + 1) % p.len()]);
            a += q[0] * r[1] - r[0] * q[1];
        }
        0.5 * a.abs()
    }
}

fn edge(a: &Sv, b: &Sv, u: f64, v: f64) -> f64 {
    (b[0] - a[0]) * (v - a[1]) - (b[1] - a[1]) * (u - a[0])
}

/// Clips a camera-space triangle against `z ≥ near`.
fn clip_near(tri: [Vector3<f64>; 3]) -> ([Vector3<f64>; 4], usize) {
    let mut out = [Vector3::zeros(); 4];
    let mut n = 0;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ia, ib) = (a.z >= NEAR_PLANE_MM, b.z >= NEAR_PLANE_MM);
        if ia {
            out[n] = a;
            n += 1;
        }
        if ia != ib {
            let t = (NEAR_PLANE_MM - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE_MM;
            out[n] = p;
            n += 1;
        }
    }
    (out, n)
}

struct ScreenTri {
    v: [Sv; 3],
    face: u32,
}

fn screen_triangles(inst: &RenderInstance<'_>, k: &CameraIntrinsics) -> (Vec<ScreenTri>, Vec<f64>) {
    let verts: Vec<Vector3<f64>> = inst.mesh.vertices().iter().map(|v| inst.pose.transform_point(v)).collect();
    let mut tris = Vec::with_capacity(inst.mesh.faces().len());
    let mut shading = Vec::with_capacity(inst.mesh.faces().len());
    for (fi, f) in inst.mesh.faces().iter().enumerate() {
        let cam = [verts[f[0] as usize], verts[f[1] as usize], verts[f[2] as usize]];
        let n = (cam[1] - cam[0]).cross(&(cam[2] - cam[0]));
        let view = -(cam[0] + cam[1] + cam[2]) / 3.0;
        let denom = n.norm() * view.norm();
        shading.push(if denom > 0.0 { (n.dot(&view) / denom).abs() } else { 0.0 });

        let (poly, len) = clip_near(cam);
        if len < 3 {
            continue;
        }
        let proj = |p: &Vector3<f64>| -> Sv { [k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, 1.0 / p.z] };
        for j in 1..len - 1 {
            tris.push(ScreenTri { v: [proj(&poly[0]), proj(&poly[j]), proj(&poly[j + 1])], face: fi as u32 });
        }
    }
    (tris, shading)
}

/// Pixel index range `[lo, hi]` whose squares meet `[min, max]`, clamped to
/// `[0, size)`; `None` when empty.
fn pixel_span(min: f64, max: f64, size: u32) -> Option<(u32, u32)> {
    let lo = (min + 0.5).floor().max(0.0);
    let hi = (max + 0.5).floor().min(size as f64 - 1.0);
    if !(lo <= hi) {
        return None;
    }
    Some((lo as u32, hi as u32))
}

fn render_layer(inst: &RenderInstance<'_>, k: &CameraIntrinsics) -> InstanceLayer {
    let (tris, face_shading) = screen_triangles(inst, k);
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for t in &tris {
        for p in &t.v {
            umin = umin.min(p[0]);
            umax = umax.max(p[0]);
            vmin = vmin.min(p[1]);
            vmax = vmax.max(p[1]);
        }
    }
    let (Some((x0, x1)), Some((y0, y1))) = (pixel_span(umin, umax, k.width), pixel_span(vmin, vmax, k.height)) else {
        return InstanceLayer { face_shading, ..InstanceLayer::empty() };
    };
    let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut depth = vec![f64::INFINITY; (width * height) as usize];
    let mut face = vec![0u32; depth.len()];

    for t in &tris {
        let [a, b, c] = &t.v;
        let area2 = edge(a, b, c[0], c[1]);
        let degenerate = area2.abs() < AREA_EPS;
        // Inverse depth as an affine function of (u, v).
        let plane = (!degenerate).then(|| {
            let du = ((b[2] - a[2]) * (c[1] - a[1]) - (c[2] - a[2]) * (b[1] - a[1])) / area2;
            let dv = ((c[2] - a[2]) * (b[0] - a[0]) - (b[2] - a[2]) * (c[0] - a[0])) / area2;
            (du, dv)
        });
        let sign = area2.signum();
        let inside =
            |u: f64, v: f64| sign * edge(a, b, u, v) >= 0.0 && sign * edge(b, c, u, v) >= 0.0 && sign * edge(c, a, u, v) >= 0.0;

        let (tu0, tu1) = (a[0].min(b[0]).min(c[0]), a[0].max(b[0]).max(c[0]));
        let (tv0, tv1) = (a[1].min(b[1]).min(c[1]), a[1].max(b[1]).max(c[1]));
        let (Some((px0, px1)), Some((py0, py1))) = (pixel_span(tu0, tu1, k.width), pixel_span(tv0, tv1, k.height)) else {
            continue;
        };
        let base = Poly::from_slice(&t.v);
        for y in py0..=py1 {
            let (yl, yh) = (y as f64 - 0.5, y as f64 + 0.5);
            for x in px0..=px1 {
                let (xl, xh) = (x as f64 - 0.5, x as f64 + 0.5);
                let max_iz = match plane {
                    Some((du, dv)) if inside(xl, yl) && inside(xh, yl) && inside(xl, yh) && inside(xh, yh) => {
                        // Square fully inside: the extreme is at a corner.
                        let at = |u: f64, v: f64| a[2] + du * (u - a[0]) + dv * (v - a[1]);
                        at(xl, yl).max(at(xh, yl)).max(at(xl, yh)).max(at(xh, yh))
                    }
                    _ => {
                        let p = base.clip(0, xl, 1.0).clip(0, xh, -1.0).clip(1, yl, 1.0).clip(1, yh, -1.0);
                        let covered = if degenerate { p.len > 0 } else { p.len >= 3 && p.area() > AREA_EPS };
                        if !covered {
                            continue;
                        }
                        p.points().iter().fold(f64::NEG_INFINITY, |m, q| m.max(q[2]))
                    }
                };
                let z = 1.0 / max_iz;
                let i = ((y - y0) * width + (x - x0)) as usize;
                if z < depth[i] {
                    depth[i] = z;
                    face[i] = t.face;
                }
            }
        }
    }
    InstanceLayer { x0, y0, width, height, depth, face, face_shading }
}

/// Renders each instance alone (in parallel), then composites them: the
/// nearest surface wins, ties go to the lower instance index.
pub fn rasterize(instances: &[RenderInstance<'_>], k: &CameraIntrinsics) -> Rendering {
    let layers = crate::par::map(instances, |inst| render_layer(inst, k));
    let (w, h) = (k.width, k.height);
    let mut pixels = vec![(f64::INFINITY, 0u32, 0u32); (w * h) as usize];
    crate::par::for_each_row(&mut pixels, w as usize, |y, row| {
        for (i, layer) in layers.iter().enumerate() {
            let y = y as u32;
            if y < layer.y0 || y >= layer.y0 + layer.height {
                continue;
            }
            for x in layer.x0..layer.x0 + layer.width {
                let o = ((y - layer.y0) * layer.width + (x - layer.x0)) as usize;
                let d = layer.depth[o];
                let px = &mut row[x as usize];
                if d < px.0 {
                    *px = (d, i as u32 + 1, layer.face[o]);
                }
            }
        }
    });
    let depth = pixels.iter().map(|p| if p.0.is_finite() { p.0 } else { 0.0 }).collect();
    let instance = pixels.iter().map(|p| p.1).collect();
    let face = pixels.iter().map(|p| p.2).collect();
    Rendering { width: w, height: h, depth, instance, face, layers }
}

/// `|visible| / |unoccluded|`, 0 when the unoccluded mask is empty.
pub fn visibility_fraction(visible: &GrayImage, unoccluded: &GrayImage) -> Result<f64, SceneGenError> {
    if visible.dimensions() != unoccluded.dimensions() {
        return Err(SceneGenError::DimensionMismatch { a: visible.dimensions(), b: unoccluded.dimensions() });
    }
    let count = |m: &GrayImage| m.pixels().filter(|p| p.0[0] != 0).count();
    let all = count(unoccluded);
    Ok(if all == 0 { 0.0 } else { count(visible) as f64 / all as f64 })
}

/// `[x, y, w, h]` of the nonzero pixels, `[-1, -1, -1, -1]` when empty.
pub fn mask_bbox(mask: &GrayImage) -> [i64; 4] {
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] != 0 {
            x0 = x0.min(x as i64);
            y0 = y0.min(y as i64);
            x1 = x1.max(x as i64);
            y1 = y1.max(y as i64);
        }
    }
    if x0 == i64::MAX {
        [-1, -1, -1, -1]
    } else {
        [x0, y0, x1 - x0 + 1, y1 - y0 + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, random_rotation};
    use crate::mesh::{sample_points_with_faces, shapes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 32.5, cy: 24.5, width: 64, height: 48 }
    }

    fn at(z: f64) -> Pose {
        Pose { rotation: nalgebra::Matrix3::identity(), translation: Vector3::new(0.0, 0.0, z) }
    }

    #[test]
    fn empty_scene() {
        let r = rasterize(&[], &cam());
        assert!(r.depth_map().iter().all(|&d| d == 0.0));
        assert!(r.instance_map().iter().all(|&i| i == 0));
    }

    #[test]
    fn fronto_parallel_triangle() {
        let tri = Mesh::new(
            vec![Vector3::new(-20.0, -15.0, 0.0), Vector3::new(20.0, -15.0, 0.0), Vector3::new(0.0, 20.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let r = rasterize(&[RenderInstance { mesh: &tri, pose: at(1000.0) }], &cam());
        assert!(r.visible_count(0) > 0);
        let c = project(&Vector3::new(0.0, -10.0 / 3.0, 1000.0), &cam()).unwrap();
        let (x, y) = (c.x.round() as u32, c.y.round() as u32);
        assert!((r.depth(x, y) - 1000.0).abs() <= 0.5);
        assert_eq!(r.instance(x, y), 1);
    }

    #[test]
    fn tilted_triangle_depth_is_near_analytic() {
        // plane z = 1000 + 0.5 x in camera space
        let tri = Mesh::new(
            vec![Vector3::new(-20.0, -15.0, -10.0), Vector3::new(20.0, -15.0, 10.0), Vector3::new(0.0, 20.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let r = rasterize(&[RenderInstance { mesh: &tri, pose: at(1000.0) }], &cam());
        let (x, y) = (32u32, 24u32);
        // ray through the pixel center hits z with x = (u - cx) z / fx
        let u = x as f64 - 32.5;
        let z_center = 1000.0 / (1.0 - 0.5 * u / 500.0);
        let d = r.depth(x, y);
        assert!(d <= z_center + 1e-9 && z_center - d <= 0.5, "{d} vs {z_center}");
    }

    #[test]
    fn front_object_hides_back_object() {
        let back = shapes::quad(-40.0, -30.0, 40.0, 30.0, 0.0);
        let front = shapes::quad(-10.0, -10.0, 10.0, 10.0, 0.0);
        let r = rasterize(
            &[RenderInstance { mesh: &back, pose: at(1000.0) }, RenderInstance { mesh: &front, pose: at(800.0) }],
            &cam(),
        );
        let back_all = r.unoccluded_mask(0);
        let back_vis = r.visible_mask(0);
        let front_all = r.unoccluded_mask(1);
        for (x, y, p) in front_all.enumerate_pixels() {
            if p.0[0] != 0 {
                assert_eq!(back_vis.get_pixel(x, y).0[0], 0);
                assert_eq!(back_all.get_pixel(x, y).0[0], 255);
                assert!((r.depth(x, y) - 800.0).abs() < 1e-9);
            }
        }
        assert!(r.visible_count(0) < r.unoccluded_count(0));
        assert_eq!(r.visible_count(1), r.unoccluded_count(1));
    }

    #[test]
    fn half_occluded_quad() {
        // pixel boundaries sit at half-integers; cx = 32.5 aligns x = 0 with one
        let back = shapes::quad(-40.0, -30.0, 40.0, 30.0, 0.0);
        let occluder = shapes::quad(0.0, -100.0, 100.0, 100.0, 0.0);
        let r = rasterize(
            &[RenderInstance { mesh: &back, pose: at(1000.0) }, RenderInstance { mesh: &occluder, pose: at(900.0) }],
            &cam(),
        );
        let n = r.unoccluded_count(0);
        assert_eq!(n, 40 * 30);
        let v = visibility_fraction(&r.visible_mask(0), &r.unoccluded_mask(0)).unwrap();
        assert!((v - 0.5).abs() <= 1.0 / n as f64, "{v}");
    }

    #[test]
    fn visibility_fraction_examples() {
        let mut m = GrayImage::new(4, 4);
        m.put_pixel(1, 1, Luma([255]));
        assert_eq!(visibility_fraction(&m, &m).unwrap(), 1.0);
        assert_eq!(visibility_fraction(&GrayImage::new(4, 4), &m).unwrap(), 0.0);
        assert_eq!(visibility_fraction(&GrayImage::new(4, 4), &GrayImage::new(4, 4)).unwrap(), 0.0);
        assert!(matches!(visibility_fraction(&m, &GrayImage::new(3, 4)), Err(SceneGenError::DimensionMismatch { .. })));
        assert_eq!(mask_bbox(&m), [1, 1, 1, 1]);
        assert_eq!(mask_bbox(&GrayImage::new(2, 2)), [-1, -1, -1, -1]);
    }

    #[test]
    fn surface_points_never_in_front_of_rendered_depth() {
        let k = CameraIntrinsics { fx: 600.0, fy: 600.0, cx: 80.0, cy: 60.0, width: 160, height: 120 };
        let mesh = shapes::strawberry(30.0, 36.0, 12, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let poses: Vec<Pose> = (0..3)
                .map(|_| Pose {
                    rotation: random_rotation(&mut rng),
                    translation: Vector3::new(
                        rng.random_range(-30.0..30.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(250.0..400.0),
                    ),
                })
                .collect();
            let inst: Vec<_> = poses.iter().map(|p| RenderInstance { mesh: &mesh, pose: *p }).collect();
            let r = rasterize(&inst, &k);
            let (pts, _) = sample_points_with_faces(&mesh, 2000, rng.random()).unwrap();
            for pose in &poses {
                for p in pts.points().iter().chain(mesh.vertices()) {
                    let q = pose.transform_point(p);
                    let uv = project(&q, &k).unwrap();
                    if !k.contains(&uv) {
                        continue;
                    }
                    let (x, y) = ((uv.x + 0.5).floor() as u32, (uv.y + 0.5).floor() as u32);
                    let d = r.depth(x, y);
                    assert!(d > 0.0 && d <= q.z + 1e-9, "depth {d} vs point {}", q.z);
                }
            }
            for (d, i) in r.depth_map().iter().zip(r.instance_map()) {
                assert_eq!(*d != 0.0, *i != 0);
            }
        }
    }

    #[test]
    fn near_plane_clips_instead_of_wrapping() {
        // a quad straddling the camera plane must not project behind-camera parts
        let m = shapes::quad(-50.0, -50.0, 50.0, 50.0, 0.0);
        let pose = Pose { rotation: crate::geometry::rot_x(1.2), translation: Vector3::new(0.0, 0.0, 20.0) };
        let r = rasterize(&[RenderInstance { mesh: &m, pose }], &cam());
        assert!(r.depth_map().iter().all(|&d| d == 0.0 || d >= NEAR_PLANE_MM - 1e-9));
    }

    #[test]
    fn shading_uses_instance_colors() {
        let q = shapes::quad(-10.0, -10.0, 10.0, 10.0, 0.0);
        let r = rasterize(&[RenderInstance { mesh: &q, pose: at(500.0) }], &cam());
        let img = r.shade_rgb(&[[200, 100, 0]], [50, 50, 50]);
        assert_eq!(img.get_pixel(0, 0).0, [50, 50, 50]);
        let c = img.get_pixel(32, 24).0;
        assert!(c[0] > 190 && c[1] > 90 && c[2] == 0, "{c:?}");
    }
}
