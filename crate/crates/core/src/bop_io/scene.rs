use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, ImageEncoder, Luma, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{read_json, to_bop_json, write_file, BopError};
use crate::geometry::{from_row_major, Pose};

pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// One annotated object instance in `scene_gt.json`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BopSceneGtEntry {
    /// Row-major model-to-camera rotation.
    pub cam_R_m2c: [f64; 9],
    /// Model-to-camera translation, mm.
    pub cam_t_m2c: [f64; 3],
    pub obj_id: u32,
}

impl BopSceneGtEntry {
    pub fn from_pose(obj_id: u32, pose: &Pose) -> Self {
        let t = pose.translation;
        Self { cam_R_m2c: pose.rotation_row_major(), cam_t_m2c: [t.x, t.y, t.z], obj_id }
    }

    /// The pose as stored; not re-orthonormalized.
    pub fn pose(&self) -> Pose {
        Pose {
            rotation: from_row_major(&self.cam_R_m2c),
            translation: Vector3::new(self.cam_t_m2c[0], self.cam_t_m2c[1], self.cam_t_m2c[2]),
        }
    }
}

/// Per-image camera record in `scene_camera.json`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BopSceneCameraEntry {
    /// Row-major `[fx, 0, cx, 0, fy, cy, 0, 0, 1]`.
    pub cam_K: [f64; 9],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cam_R_w2c: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cam_t_w2c: Option<[f64; 3]>,
    /// Millimetres per depth-image unit.
    pub depth_scale: f64,
}

impl BopSceneCameraEntry {
    pub fn intrinsics(&self, width: u32, height: u32) -> crate::geometry::CameraIntrinsics {
        crate::geometry::CameraIntrinsics {
            fx: self.cam_K[0],
            fy: self.cam_K[4],
            cx: self.cam_K[2],
            cy: self.cam_K[5],
            width,
            height,
        }
    }

    /// Zero skew and a `[0, 0, 1]` last row, within 1e-9.
    pub fn k_is_pinhole(&self) -> bool {
        let k = &self.cam_K;
        [k[1], k[3], k[6], k[7]].iter().all(|v| v.abs() <= 1e-9) && (k[8] - 1.0).abs() <= 1e-9
    }
}

/// Per-instance entry in `scene_gt_info.json`. Boxes are `[x, y, w, h]`,
/// `[-1, -1, -1, -1]` when empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BopGtInfoEntry {
    pub bbox_obj: [i64; 4],
    pub bbox_visib: [i64; 4],
    pub px_count_all: u64,
    pub px_count_valid: u64,
    pub px_count_visib: u64,
    pub visib_fract: f64,
}

/// Rendered outputs for one image. `masks[k]` / `masks_visib[k]` belong to
/// the k-th ground-truth entry of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImages {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub masks: Vec<GrayImage>,
    pub masks_visib: Vec<GrayImage>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BopScene {
    pub gt: BTreeMap<u32, Vec<BopSceneGtEntry>>,
    pub camera: BTreeMap<u32, BopSceneCameraEntry>,
    pub gt_info: BTreeMap<u32, Vec<BopGtInfoEntry>>,
    pub images: BTreeMap<u32, SceneImages>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadOptions {
    /// Fail with `MissingFile` when a referenced image is absent.
    pub check_files: bool,
    pub load_images: bool,
}

pub(crate) fn rgb_path(dir: &Path, im: u32) -> PathBuf {
    dir.join("rgb").join(format!("{im:06}.png"))
}

pub(crate) fn depth_path(dir: &Path, im: u32) -> PathBuf {
    dir.join("depth").join(format!("{im:06}.png"))
}

pub(crate) fn mask_path(dir: &Path, sub: &str, im: u32, k: usize) -> PathBuf {
    dir.join(sub).join(format!("{im:06}_{k:06}.png"))
}

/// `round(mm / scale)`, saturating to the 16-bit range; 0 stays empty.
pub fn depth_mm_to_raw(mm: f64, depth_scale: f64) -> u16 {
    if !(mm > 0.0) {
        return 0;
    }
    (mm / depth_scale).round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn depth_raw_to_mm(raw: u16, depth_scale: f64) -> f64 {
    raw as f64 * depth_scale
}

fn encode_png<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<Vec<u8>, BopError>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    use image::EncodableLayout;
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(img.as_raw().as_bytes(), img.width(), img.height(), P::COLOR_TYPE)
        .map_err(|e| BopError::Image { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(buf)
}

/// Writes annotations and all images of `scene` into `dir`.
pub fn write_scene(dir: &Path, scene: &BopScene) -> Result<(), BopError> {
    write_file(&dir.join("scene_gt.json"), to_bop_json(scene.gt.iter()).as_bytes())?;
    write_file(&dir.join("scene_camera.json"), to_bop_json(scene.camera.iter()).as_bytes())?;
    write_file(&dir.join("scene_gt_info.json"), to_bop_json(scene.gt_info.iter()).as_bytes())?;

    let ids: Vec<u32> = scene.images.keys().copied().collect();
    let encoded = crate::par::map(&ids, |&im| -> Result<Vec<(PathBuf, Vec<u8>)>, BopError> {
        let imgs = &scene.images[&im];
        let mut files = Vec::with_capacity(2 + 2 * imgs.masks.len());
        let p = rgb_path(dir, im);
        files.push((p.clone(), encode_png(&imgs.rgb, &p)?));
        let p = depth_path(dir, im);
        files.push((p.clone(), encode_png(&imgs.depth, &p)?));
        for (k, m) in imgs.masks.iter().enumerate() {
            let p = mask_path(dir, "mask", im, k);
            files.push((p.clone(), encode_png(m, &p)?));
        }
        for (k, m) in imgs.masks_visib.iter().enumerate() {
            let p = mask_path(dir, "mask_visib", im, k);
            files.push((p.clone(), encode_png(m, &p)?));
        }
        Ok(files)
    });
    for files in encoded {
        for (path, bytes) in files? {
            write_file(&path, &bytes)?;
        }
    }
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf, BopError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(BopError::MissingFile(path))
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, BopError> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => BopError::MissingFile(path.to_path_buf()),
        other => BopError::Image { path: path.to_path_buf(), message: other.to_string() },
    })
}

pub fn read_scene(dir: &Path, opts: ReadOptions) -> Result<BopScene, BopError> {
    let gt_path = dir.join("scene_gt.json");
    let gt: BTreeMap<u32, Vec<BopSceneGtEntry>> = read_json(&gt_path)?;
    let camera: BTreeMap<u32, BopSceneCameraEntry> = read_json(&dir.join("scene_camera.json"))?;
    let info_path = dir.join("scene_gt_info.json");
    let gt_info = if info_path.exists() { read_json(&info_path)? } else { BTreeMap::new() };
    if let Some(&im_id) = gt.keys().find(|k| !camera.contains_key(k)) {
        return Err(BopError::InconsistentKeys { path: gt_path, im_id });
    }

    if opts.check_files || opts.load_images {
        for (&im, entries) in &gt {
            require(rgb_path(dir, im))?;
            require(depth_path(dir, im))?;
            for k in 0..entries.len() {
                require(mask_path(dir, "mask", im, k))?;
                require(mask_path(dir, "mask_visib", im, k))?;
            }
        }
    }

    let mut images = BTreeMap::new();
    if opts.load_images {
        for (&im, entries) in &gt {
            let rgb = open_image(&rgb_path(dir, im))?.to_rgb8();
            let depth = open_image(&depth_path(dir, im))?.to_luma16();
            let load = |sub: &str| -> Result<Vec<GrayImage>, BopError> {
                (0..entries.len()).map(|k| Ok(open_image(&mask_path(dir, sub, im, k))?.to_luma8())).collect()
            };
            images.insert(im, SceneImages { rgb, depth, masks: load("mask")?, masks_visib: load("mask_visib")? });
        }
    }
    Ok(BopScene { gt, camera, gt_info, images })
}

/// Scene directories under `root`, sorted. `root` may itself be a scene, a
/// split directory, or a dataset root (scenes two levels down).
pub fn scene_dirs(root: &Path) -> Vec<PathBuf> {
    fn is_scene(p: &Path) -> bool {
        p.join("scene_gt.json").is_file()
    }
    fn subdirs(p: &Path) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(p)
            .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect())
            .unwrap_or_default();
        v.sort();
        v
    }
    if is_scene(root) {
        return vec![root.to_path_buf()];
    }
    let mut out = Vec::new();
    for d in subdirs(root) {
        if is_scene(&d) {
            out.push(d);
        } else {
            out.extend(subdirs(&d).into_iter().filter(|s| is_scene(s)));
        }
    }
    out
}
