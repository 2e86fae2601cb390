//! BOP dataset layout: scene annotations, images, results CSV, validation.
//!
//! ```text
//! <dataset>/camera.json
//! <dataset>/models/obj_NNNNNN.ply, models_info.json
//! <dataset>/<split>/<scene NNNNNN>/
//!     scene_gt.json  scene_camera.json  scene_gt_info.json
//!     rgb/NNNNNN.png  depth/NNNNNN.png
//!     mask/NNNNNN_MMMMMM.png  mask_visib/NNNNNN_MMMMMM.png
//! ```
//!
//! JSON is written with image ids in ascending numeric order and floats in
//! their shortest round-trip form, so writing the same data twice yields
//! byte-identical files.

mod results;
mod scene;
mod validate;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use results::{read_results, write_results, ResultRow};
pub use scene::{
    depth_mm_to_raw, depth_raw_to_mm, read_scene, scene_dirs, write_scene, BopGtInfoEntry, BopScene, BopSceneCameraEntry,
    BopSceneGtEntry, DepthImage, ReadOptions, SceneImages,
};
pub use validate::{validate_dataset, ValidationReport, Violation, ViolationKind};

/// BOP default: 0.1 mm per depth unit, 6.5 m range in 16 bits.
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;

/// Rotation orthonormality tolerance for annotations read from disk.
pub const FILE_ROTATION_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BopError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid JSON in {path} at line {line}, column {column}: {message}")]
    Json { path: PathBuf, line: usize, column: usize, message: String },
    #[error("image {im_id} in {path} has no entry in scene_camera.json")]
    InconsistentKeys { path: PathBuf, im_id: u32 },
    #[error("CSV error in {path} at line {line}: {message}")]
    Csv { path: PathBuf, line: u64, message: String },
    #[error("{path} line {line}: field '{field}' has {got} values, expected {expected}")]
    FieldCount { path: PathBuf, line: u64, field: &'static str, expected: usize, got: usize },
    #[error("{path} line {line}: non-finite number in field '{field}'")]
    NonFiniteNumber { path: PathBuf, line: u64, field: &'static str },
    #[error("{path} line {line}: {message}")]
    InvalidValue { path: PathBuf, line: u64, message: String },
    #[error("directory {0} is not writable")]
    NonWritableDir(PathBuf),
    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BopError + '_ {
    move |source| BopError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BopError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(BopError::MissingFile(path.to_path_buf())),
        Err(e) => return Err(BopError::Io { path: path.to_path_buf(), source: e }),
    };
    serde_json::from_str(&text).map_err(|e| BopError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Renders a map as one compact JSON value per top-level key.
pub(crate) fn to_bop_json<K: std::fmt::Display, V: Serialize>(entries: impl IntoIterator<Item = (K, V)>) -> String {
    let mut out = String::from("{");
    let mut first = true;
    for (k, v) in entries {
        out.push_str(if first { "\n" } else { ",\n" });
        first = false;
        out.push_str(&format!("  \"{k}\": "));
        out.push_str(&serde_json::to_string(&v).expect("annotation values serialize"));
    }
    out.push_str(if first { "}\n" } else { "\n}\n" });
    out
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BopError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| match e.kind() {
            std::io::ErrorKind::PermissionDenied | std::io::ErrorKind::ReadOnlyFilesystem => {
                BopError::NonWritableDir(parent.to_path_buf())
            }
            _ => BopError::Io { path: parent.to_path_buf(), source: e },
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::PermissionDenied | std::io::ErrorKind::ReadOnlyFilesystem => {
            BopError::NonWritableDir(path.parent().unwrap_or(path).to_path_buf())
        }
        _ => BopError::Io { path: path.to_path_buf(), source: e },
    })
}

/// Dataset-level `camera.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetCamera {
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
    pub fx: f64,
    pub fy: f64,
    pub height: u32,
    pub width: u32,
}

impl DatasetCamera {
    pub fn intrinsics(&self) -> crate::geometry::CameraIntrinsics {
        crate::geometry::CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }
}

pub fn write_dataset_camera(dataset: &Path, cam: &DatasetCamera) -> Result<(), BopError> {
    let mut text = serde_json::to_string_pretty(cam).expect("camera serializes");
    text.push('\n');
    write_file(&dataset.join("camera.json"), text.as_bytes())
}

pub fn read_dataset_camera(dataset: &Path) -> Result<DatasetCamera, BopError> {
    read_json(&dataset.join("camera.json"))
}

/// One entry of `models_info.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub diameter: f64,
    pub min_x: f64,
    pub min_y: f64,
    pub min_z: f64,
    pub size_x: f64,
    pub size_y: f64,
    pub size_z: f64,
}

impl ModelInfo {
    pub fn of(mesh: &crate::mesh::Mesh) -> Self {
        let v = mesh.vertices();
        let mut lo = v.first().copied().unwrap_or_default();
        let mut hi = lo;
        for p in v {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Self {
            diameter: mesh.diameter(),
            min_x: lo.x,
            min_y: lo.y,
            min_z: lo.z,
            size_x: hi.x - lo.x,
            size_y: hi.y - lo.y,
            size_z: hi.z - lo.z,
        }
    }
}

pub fn model_path(models_dir: &Path, obj_id: u32) -> PathBuf {
    models_dir.join(format!("obj_{obj_id:06}.ply"))
}

pub fn write_models_info(models_dir: &Path, info: &std::collections::BTreeMap<u32, ModelInfo>) -> Result<(), BopError> {
    write_file(&models_dir.join("models_info.json"), to_bop_json(info.iter()).as_bytes())
}

pub fn read_models_info(models_dir: &Path) -> Result<std::collections::BTreeMap<u32, ModelInfo>, BopError> {
    read_json(&models_dir.join("models_info.json"))
}

/// Loads every `obj_NNNNNN.ply` in a models directory, keyed by object id.
pub fn load_models(models_dir: &Path) -> Result<std::collections::BTreeMap<u32, crate::mesh::Mesh>, BopError> {
    let mut out = std::collections::BTreeMap::new();
    let entries = std::fs::read_dir(models_dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => BopError::MissingFile(models_dir.to_path_buf()),
        _ => BopError::Io { path: models_dir.to_path_buf(), source: e },
    })?;
    for entry in entries {
        let path = entry.map_err(io_err(models_dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(id) = name.strip_prefix("obj_").and_then(|s| s.strip_suffix(".ply")).and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        let mesh = crate::mesh::load_ply(&path).map_err(|e| BopError::InvalidValue {
            path: path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        out.insert(id, mesh);
    }
    Ok(out)
}
