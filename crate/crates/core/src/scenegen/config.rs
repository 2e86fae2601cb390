use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SceneGenError;
use crate::geometry::CameraIntrinsics;
use crate::mesh::{load_ply, shapes, Mesh};

fn default_count() -> usize {
    1
}
fn default_plane() -> f64 {
    600.0
}
fn default_cameras() -> usize {
    10
}
fn default_scenes() -> usize {
    1
}
fn default_depth_scale() -> f64 {
    crate::bop_io::DEFAULT_DEPTH_SCALE
}
fn default_split() -> String {
    "train_pbr".to_string()
}

/// A model slot: either a PLY file or a built-in shape name
/// (`strawberry`, `sphere`, `cube`, `cylinder`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Object id used in annotations; defaults to the 1-based position among
    /// the target models. Ignored for distractors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_id: Option<u32>,
    /// Base color of the flat-shaded placeholder RGB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

impl ModelSpec {
    pub fn shape(name: &str, count: usize) -> Self {
        Self { path: None, shape: Some(name.to_string()), count, obj_id: None, color: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Scene-generation configuration, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub distractors: Vec<ModelSpec>,
    /// Side of the square placement area, mm.
    #[serde(default = "default_plane")]
    pub plane_mm: f64,
    /// Cameras (images) per scene.
    #[serde(default = "default_cameras")]
    pub cameras: usize,
    /// Camera distance from the scene centroid, `[min, max]` mm.
    pub radius_mm: [f64; 2],
    /// `[width, height]`, pixels.
    pub image: [u32; 2],
    pub intrinsics: IntrinsicsSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scenes")]
    pub scenes: usize,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default = "default_split")]
    pub split: String,
}

const PALETTE: [[u8; 3]; 6] = [[200, 40, 45], [60, 150, 70], [70, 90, 190], [210, 170, 50], [150, 80, 170], [60, 170, 180]];

/// A loaded model with its role in the scene.
#[derive(Debug, Clone)]
pub struct LibraryModel {
    /// `None` for distractors.
    pub obj_id: Option<u32>,
    pub mesh: Mesh,
    pub count: usize,
    pub color: [u8; 3],
    pub bounding_radius: f64,
}

/// A validated configuration with all meshes loaded.
#[derive(Debug, Clone)]
pub struct SceneSetup {
    pub library: Vec<LibraryModel>,
    pub plane_mm: f64,
    pub cameras: usize,
    pub radius_mm: [f64; 2],
    pub camera: CameraIntrinsics,
    pub seed: u64,
    pub scenes: usize,
    pub depth_scale: f64,
    pub split: String,
}

impl SceneSetup {
    pub fn targets(&self) -> impl Iterator<Item = &LibraryModel> {
        self.library.iter().filter(|m| m.obj_id.is_some())
    }
}

fn invalid(msg: impl Into<String>) -> SceneGenError {
    SceneGenError::InvalidConfig(msg.into())
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SceneGenError> {
        toml::from_str(text).map_err(|e| SceneGenError::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SceneGenError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn camera(&self) -> CameraIntrinsics {
        let i = &self.intrinsics;
        CameraIntrinsics { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy, width: self.image[0], height: self.image[1] }
    }

    fn load_mesh(spec: &ModelSpec, base_dir: &Path) -> Result<Mesh, SceneGenError> {
        match (&spec.path, &spec.shape) {
            (Some(p), None) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                load_ply(&path).map_err(|source| SceneGenError::ModelLoad { path, source })
            }
            (None, Some(name)) => shapes::builtin(name).ok_or_else(|| SceneGenError::UnknownShape(name.clone())),
            _ => Err(invalid("each model needs exactly one of `path` or `shape`")),
        }
    }

    /// Validates the configuration and loads every mesh. Relative model
    /// paths are resolved against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<SceneSetup, SceneGenError> {
        let camera = self.camera();
        camera.validate()?;
        let [rmin, rmax] = self.radius_mm;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return Err(invalid(format!("radius_mm must be positive and ordered, got [{rmin}, {rmax}]")));
        }
        if !(self.plane_mm > 0.0 && self.plane_mm.is_finite()) {
            return Err(invalid(format!("plane_mm must be positive, got {}", self.plane_mm)));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(invalid(format!("depth_scale must be positive, got {}", self.depth_scale)));
        }
        if self.split.is_empty() || self.split.contains(['/', '\\']) {
            return Err(invalid(format!("split must be a plain directory name, got {:?}", self.split)));
        }

        let mut library = Vec::new();
        let mut used = std::collections::BTreeSet::new();
        for (i, spec) in self.models.iter().enumerate() {
            let obj_id = spec.obj_id.unwrap_or(i as u32 + 1);
            if obj_id == 0 || !used.insert(obj_id) {
                return Err(invalid(format!("object ids must be positive and unique, got {obj_id} twice or zero")));
            }
            let mesh = Self::load_mesh(spec, base_dir)?;
            library.push(LibraryModel {
                obj_id: Some(obj_id),
                bounding_radius: mesh.bounding_radius(),
                mesh,
                count: spec.count,
                color: spec.color.unwrap_or(PALETTE[i % PALETTE.len()]),
            });
        }
        for (i, spec) in self.distractors.iter().enumerate() {
            let mesh = Self::load_mesh(spec, base_dir)?;
            library.push(LibraryModel {
                obj_id: None,
                bounding_radius: mesh.bounding_radius(),
                mesh,
                count: spec.count,
                color: spec.color.unwrap_or(PALETTE[(PALETTE.len() - 1 - i % PALETTE.len()) % PALETTE.len()]),
            });
        }
        if let Some(m) = library.iter().find(|m| m.count > 0 && m.mesh.faces().is_empty()) {
            return Err(invalid(format!("model {:?} has no faces", m.obj_id)));
        }

        // Expected packing density of the bounding-sphere footprints.
        let footprint: f64 = library.iter().map(|m| m.count as f64 * std::f64::consts::PI * m.bounding_radius.powi(2)).sum();
        let density = footprint / (self.plane_mm * self.plane_mm);
        if density >= 0.5 {
            return Err(invalid(format!(
                "plane of {} mm is too small: objects would cover {:.0}% of it (must stay below 50%)",
                self.plane_mm,
                density * 100.0
            )));
        }

        Ok(SceneSetup {
            library,
            plane_mm: self.plane_mm,
            cameras: self.cameras,
            radius_mm: self.radius_mm,
            camera,
            seed: self.seed,
            scenes: self.scenes,
            depth_scale: self.depth_scale,
            split: self.split.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
scenes = 2
cameras = 3
plane_mm = 500
radius_mm = [400, 700]
image = [320, 240]

[intrinsics]
fx = 400
fy = 400
cx = 159.5
cy = 119.5

[[models]]
shape = "strawberry"
count = 4

[[distractors]]
shape = "cube"
count = 2
color = [10, 20, 30]
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = SceneConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.depth_scale, 0.1);
        assert_eq!(cfg.split, "train_pbr");
        let setup = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(setup.library.len(), 2);
        assert_eq!(setup.library[0].obj_id, Some(1));
        assert_eq!(setup.library[1].obj_id, None);
        assert_eq!(setup.library[1].color, [10, 20, 30]);
        assert_eq!(setup.targets().count(), 1);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(SceneConfig::from_toml_str("models = []\nbogus = 1"), Err(SceneGenError::ConfigParse(_))));
        let mut cfg = SceneConfig::from_toml_str(SAMPLE).unwrap();
        cfg.radius_mm = [700.0, 400.0];
        assert!(matches!(cfg.resolve(Path::new(".")), Err(SceneGenError::InvalidConfig(_))));
        let mut cfg = SceneConfig::from_toml_str(SAMPLE).unwrap();
        cfg.plane_mm = 60.0;
        assert!(matches!(cfg.resolve(Path::new(".")), Err(SceneGenError::InvalidConfig(_))));
        let mut cfg = SceneConfig::from_toml_str(SAMPLE).unwrap();
        cfg.models[0].shape = Some("teapot".into());
        assert!(matches!(cfg.resolve(Path::new(".")), Err(SceneGenError::UnknownShape(_))));
        let mut cfg = SceneConfig::from_toml_str(SAMPLE).unwrap();
        cfg.models[0].path = Some("x.ply".into());
        assert!(matches!(cfg.resolve(Path::new(".")), Err(SceneGenError::InvalidConfig(_))));
    }
}
