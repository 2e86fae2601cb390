use nalgebra::{Vector2, Vector3};
use rand::Rng;

use super::{SceneGenError, SceneSetup};
use crate::geometry::{look_at_pose, project, random_rotation, Pose};

/// Rejection attempts per object before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Rejection attempts per camera before giving up.
pub const MAX_CAMERA_ATTEMPTS: usize = 100;

/// An object resting on the plane `z = 0`, its bounding sphere centered at
/// the model origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedObject {
    /// Index into [`SceneSetup::library`].
    pub model: usize,
    pub obj_id: Option<u32>,
    /// Model-to-world transform.
    pub pose: Pose,
    pub radius: f64,
    pub is_distractor: bool,
}

impl PlacedObject {
    pub fn center(&self) -> Vector3<f64> {
        self.pose.translation
    }
}

/// Places every target, then every distractor: uniform orientation, uniform
/// `(x, y)` on the plane, sphere touching the plane, no sphere overlap.
pub fn sample_scene<R: Rng>(setup: &SceneSetup, rng: &mut R) -> Result<Vec<PlacedObject>, SceneGenError> {
    let total: usize = setup.library.iter().map(|m| m.count).sum();
    let half = setup.plane_mm / 2.0;
    let mut placed: Vec<PlacedObject> = Vec::with_capacity(total);
    let order = setup
        .library
        .iter()
        .enumerate()
        .filter(|(_, m)| m.obj_id.is_some())
        .chain(setup.library.iter().enumerate().filter(|(_, m)| m.obj_id.is_none()));
    for (model, entry) in order {
        for _ in 0..entry.count {
            let r = entry.bounding_radius;
            let rotation = random_rotation(rng);
            let mut found = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let c = Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), r);
                if placed.iter().all(|o| (o.center() - c).norm() >= o.radius + r) {
                    found = Some(c);
                    break;
                }
            }
            let Some(translation) = found else {
                return Err(SceneGenError::PlacementFailure { placed: placed.len(), total, attempts: MAX_PLACEMENT_ATTEMPTS });
            };
            placed.push(PlacedObject {
                model,
                obj_id: entry.obj_id,
                pose: Pose { rotation, translation },
                radius: r,
                is_distractor: entry.obj_id.is_none(),
            });
        }
    }
    Ok(placed)
}

pub fn centroid(objects: &[PlacedObject]) -> Vector3<f64> {
    if objects.is_empty() {
        return Vector3::zeros();
    }
    objects.iter().map(|o| o.center()).sum::<Vector3<f64>>() / objects.len() as f64
}

/// World-to-camera poses on the upper hemisphere shell around `target`,
/// looking at it, accepted only when every point in `keep_visible` projects
/// inside the image.
pub fn sample_cameras<R: Rng>(
    setup: &SceneSetup,
    target: &Vector3<f64>,
    keep_visible: &[Vector3<f64>],
    rng: &mut R,
) -> Result<Vec<Pose>, SceneGenError> {
    let [rmin, rmax] = setup.radius_mm;
    let k = &setup.camera;
    let mut out = Vec::with_capacity(setup.cameras);
    for _ in 0..setup.cameras {
        let mut accepted = None;
        for _ in 0..MAX_CAMERA_ATTEMPTS {
            let z: f64 = rng.random_range(0.0..=1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = if rmin == rmax { rmin } else { rng.random_range(rmin..rmax) };
            let s = (1.0 - z * z).max(0.0).sqrt();
            let eye = target + rho * Vector3::new(s * phi.cos(), s * phi.sin(), z);
            let w2c = look_at_pose(&eye, target);
            let visible = keep_visible.iter().all(|p| {
                let q = w2c.transform_point(p);
                project(&q, k).map(|uv: Vector2<f64>| k.contains(&uv)).unwrap_or(false)
            });
            if visible {
                accepted = Some(w2c);
                break;
            }
        }
        out.push(accepted.ok_or(SceneGenError::CameraSamplingFailure { attempts: MAX_CAMERA_ATTEMPTS })?);
    }
    Ok(out)
}
