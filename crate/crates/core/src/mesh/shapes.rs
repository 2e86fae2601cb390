//! Procedural meshes, all centered on the origin (mm).
//!
//! Used as built-in models for scene generation when no PLY files are
//! supplied, and as fixtures.

use nalgebra::Vector3;
use std::f64::consts::{PI, TAU};

use super::Mesh;

/// Axis-aligned cube with side length `size`.
pub fn cube(size: f64) -> Mesh {
    let h = size / 2.0;
    let v: Vec<_> = (0..8)
        .map(|i| Vector3::new(if i & 1 == 0 { -h } else { h }, if i & 2 == 0 { -h } else { h }, if i & 4 == 0 { -h } else { h }))
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    Mesh::new(v, faces).expect("cube indices are valid")
}

/// Surface of revolution about z. `profile(s)` maps `s ∈ [0, 1]` (top pole to
/// bottom pole) to `(radius, z)`.
fn revolve(profile: impl Fn(f64) -> (f64, f64), rings: usize, segments: usize) -> Mesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut vertices = Vec::with_capacity(2 + (rings - 1) * segments);
    let (_, z_top) = profile(0.0);
    vertices.push(Vector3::new(0.0, 0.0, z_top));
    for ring in 1..rings {
        let (r, z) = profile(ring as f64 / rings as f64);
        for seg in 0..segments {
            let phi = TAU * seg as f64 / segments as f64;
            vertices.push(Vector3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    let (_, z_bottom) = profile(1.0);
    vertices.push(Vector3::new(0.0, 0.0, z_bottom));
    let bottom = (vertices.len() - 1) as u32;

    let idx = |ring: usize, seg: usize| (1 + (ring - 1) * segments + seg % segments) as u32;
    let mut faces = Vec::with_capacity(2 * rings * segments);
    for seg in 0..segments {
        faces.push([0, idx(1, seg), idx(1, seg + 1)]);
    }
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let a = idx(ring, seg);
            let b = idx(ring, seg + 1);
            let c = idx(ring + 1, seg);
            let d = idx(ring + 1, seg + 1);
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for seg in 0..segments {
        faces.push([idx(rings - 1, seg), bottom, idx(rings - 1, seg + 1)]);
    }
    Mesh::new(vertices, faces).expect("revolved mesh indices are valid")
}

pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> Mesh {
    revolve(
        |s| {
            let theta = PI * s;
            (radius * theta.sin(), radius * theta.cos())
        },
        rings,
        segments,
    )
}

/// Berry-like body: round shoulders at +z tapering to a blunt tip at −z.
pub fn strawberry(width: f64, height: f64, rings: usize, segments: usize) -> Mesh {
    let half_w = width / 2.0;
    let half_h = height / 2.0;
    revolve(
        |s| {
            let theta = PI * s;
            let taper = 1.0 - 0.45 * s * s;
            (half_w * theta.sin() * taper, half_h * theta.cos())
        },
        rings,
        segments,
    )
}

/// Closed cylinder about z with the given radius and height.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> Mesh {
    let h = height / 2.0;
    // Rings 1 and 3 sit on the rim; ring 2 splits the side wall.
    revolve(
        move |s| match (s * 4.0).round() as i32 {
            0 => (0.0, h),
            1 => (radius, h),
            2 => (radius, 0.0),
            3 => (radius, -h),
            _ => (0.0, -h),
        },
        4,
        segments,
    )
}

/// Two triangles spanning an axis-aligned rectangle at height `z`.
pub fn quad(x0: f64, y0: f64, x1: f64, y1: f64, z: f64) -> Mesh {
    Mesh::new(
        vec![Vector3::new(x0, y0, z), Vector3::new(x1, y0, z), Vector3::new(x1, y1, z), Vector3::new(x0, y1, z)],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("quad indices are valid")
}

/// Looks up a built-in shape by name with its default dimensions.
pub fn builtin(name: &str) -> Option<Mesh> {
    match name {
        "strawberry" => Some(strawberry(30.0, 36.0, 16, 24)),
        "sphere" => Some(uv_sphere(15.0, 12, 24)),
        "cube" => Some(cube(30.0)),
        "cylinder" => Some(cylinder(15.0, 40.0, 24)),
        _ => None,
    }
}
