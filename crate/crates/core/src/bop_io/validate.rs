use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::scene::{depth_path, mask_path, rgb_path};
use super::{
    read_dataset_camera, read_json, scene_dirs, BopError, BopGtInfoEntry, BopSceneCameraEntry, BopSceneGtEntry, FILE_ROTATION_TOL,
};
use crate::geometry::{check_rotation, from_row_major, orthonormality_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A JSON file is missing or could not be parsed.
    Unreadable,
    NoScenes,
    Orthonormality,
    InconsistentKeys,
    CameraMatrix,
    MissingFile,
    DimensionMismatch,
    VisibFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: PathBuf,
    pub im_id: Option<u32>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.path.display())?;
        if let Some(im) = self.im_id {
            write!(f, " (image {im})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenes_checked: usize,
    pub images_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, path: &Path, im_id: Option<u32>, message: impl Into<String>) {
        self.violations.push(Violation { kind, path: path.to_path_buf(), im_id, message: message.into() });
    }
}

fn load<T: serde::de::DeserializeOwned>(path: &Path, report: &mut ValidationReport) -> Option<T> {
    match read_json(path) {
        Ok(v) => Some(v),
        Err(BopError::MissingFile(p)) => {
            report.push(ViolationKind::MissingFile, &p, None, "required annotation file is missing");
            None
        }
        Err(e) => {
            report.push(ViolationKind::Unreadable, path, None, e.to_string());
            None
        }
    }
}

/// Checks every scene under `root` (a dataset root, split directory, or
/// single scene). Problems are collected, never raised.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let expected_size = read_dataset_camera(root).ok().map(|c| (c.width, c.height));
    let scenes = scene_dirs(root);
    if scenes.is_empty() {
        report.push(ViolationKind::NoScenes, root, None, "no directory containing scene_gt.json found");
    }
    for dir in scenes {
        validate_scene(&dir, expected_size, &mut report);
        report.scenes_checked += 1;
    }
    report
}

fn validate_scene(dir: &Path, expected_size: Option<(u32, u32)>, report: &mut ValidationReport) {
    let gt_path = dir.join("scene_gt.json");
    let cam_path = dir.join("scene_camera.json");
    let info_path = dir.join("scene_gt_info.json");
    let Some(gt) = load::<BTreeMap<u32, Vec<BopSceneGtEntry>>>(&gt_path, report) else { return };
    let camera = load::<BTreeMap<u32, BopSceneCameraEntry>>(&cam_path, report).unwrap_or_default();
    let gt_info = if info_path.exists() { load::<BTreeMap<u32, Vec<BopGtInfoEntry>>>(&info_path, report) } else { None };

    for (&im, cam) in &camera {
        if !cam.k_is_pinhole() {
            report.push(
                ViolationKind::CameraMatrix,
                &cam_path,
                Some(im),
                format!("cam_K is not a pinhole matrix: {:?}", cam.cam_K),
            );
        }
        if !(cam.depth_scale > 0.0) {
            report.push(
                ViolationKind::CameraMatrix,
                &cam_path,
                Some(im),
                format!("depth_scale {} is not positive", cam.depth_scale),
            );
        }
    }

    for (&im, entries) in &gt {
        report.images_checked += 1;
        if !camera.contains_key(&im) {
            report.push(ViolationKind::InconsistentKeys, &gt_path, Some(im), "image has no scene_camera.json entry");
        }
        for (k, e) in entries.iter().enumerate() {
            let r = from_row_major(&e.cam_R_m2c);
            if check_rotation(&r, FILE_ROTATION_TOL).is_err() {
                report.push(
                    ViolationKind::Orthonormality,
                    &gt_path,
                    Some(im),
                    format!(
                        "entry {k} (obj {}): rotation deviates by {:.3e} (det {:.6})",
                        e.obj_id,
                        orthonormality_error(&r),
                        r.determinant()
                    ),
                );
            }
        }
        if let Some(info) = &gt_info {
            match info.get(&im) {
                None => {
                    report.push(ViolationKind::InconsistentKeys, &info_path, Some(im), "image has no scene_gt_info.json entry")
                }
                Some(list) if list.len() != entries.len() => report.push(
                    ViolationKind::InconsistentKeys,
                    &info_path,
                    Some(im),
                    format!("{} info entries for {} ground-truth entries", list.len(), entries.len()),
                ),
                Some(list) => {
                    for (k, i) in list.iter().enumerate() {
                        if !(0.0..=1.0).contains(&i.visib_fract) {
                            report.push(
                                ViolationKind::VisibFraction,
                                &info_path,
                                Some(im),
                                format!("entry {k}: visib_fract {} outside [0, 1]", i.visib_fract),
                            );
                        }
                    }
                }
            }
        }
        check_images(dir, im, entries.len(), expected_size, report);
    }
}

fn check_images(dir: &Path, im: u32, n: usize, expected_size: Option<(u32, u32)>, report: &mut ValidationReport) {
    let mut files = vec![rgb_path(dir, im), depth_path(dir, im)];
    for k in 0..n {
        files.push(mask_path(dir, "mask", im, k));
        files.push(mask_path(dir, "mask_visib", im, k));
    }
    let mut reference: Option<(PathBuf, (u32, u32))> = expected_size.map(|s| (dir.join("../../camera.json"), s));
    for path in files {
        if !path.is_file() {
            report.push(ViolationKind::MissingFile, &path, Some(im), "referenced image file is missing");
            continue;
        }
        let dims = match image::image_dimensions(&path) {
            Ok(d) => d,
            Err(e) => {
                report.push(ViolationKind::Unreadable, &path, Some(im), e.to_string());
                continue;
            }
        };
        match &reference {
            None => reference = Some((path, dims)),
            Some((_, want)) if *want != dims => report.push(
                ViolationKind::DimensionMismatch,
                &path,
                Some(im),
                format!("size {}x{} differs from expected {}x{}", dims.0, dims.1, want.0, want.1),
            ),
            Some(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bop_io::{write_scene, BopScene, SceneImages};
    use image::{GrayImage, Luma, RgbImage};

    fn write_fixture(dir: &Path) {
        let mut s = BopScene::default();
        s.gt.insert(
            0,
            vec![BopSceneGtEntry {
                cam_R_m2c: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                cam_t_m2c: [0.0, 0.0, 500.0],
                obj_id: 1,
            }],
        );
        s.camera.insert(
            0,
            BopSceneCameraEntry {
                cam_K: [400.0, 0.0, 8.0, 0.0, 400.0, 6.0, 0.0, 0.0, 1.0],
                cam_R_w2c: None,
                cam_t_w2c: None,
                depth_scale: 0.1,
            },
        );
        s.gt_info.insert(
            0,
            vec![BopGtInfoEntry {
                bbox_obj: [0, 0, 1, 1],
                bbox_visib: [0, 0, 1, 1],
                px_count_all: 1,
                px_count_valid: 1,
                px_count_visib: 1,
                visib_fract: 1.0,
            }],
        );
        let mut m = GrayImage::new(16, 12);
        m.put_pixel(0, 0, Luma([255]));
        s.images.insert(
            0,
            SceneImages {
                rgb: RgbImage::new(16, 12),
                depth: crate::bop_io::DepthImage::new(16, 12),
                masks: vec![m.clone()],
                masks_visib: vec![m],
            },
        );
        write_scene(dir, &s).unwrap();
    }

    #[test]
    fn pristine_scene_is_clean() {
        let d = tempfile::tempdir().unwrap();
        write_fixture(d.path());
        let r = validate_dataset(d.path());
        assert!(r.is_clean(), "{:?}", r.violations);
        assert_eq!((r.scenes_checked, r.images_checked), (1, 1));
    }

    #[test]
    fn corrupted_rotation_reported() {
        let d = tempfile::tempdir().unwrap();
        write_fixture(d.path());
        let p = d.path().join("scene_gt.json");
        let text = std::fs::read_to_string(&p).unwrap().replacen("[1.0,0.0,0.0", "[1.1,0.0,0.0", 1);
        std::fs::write(&p, text).unwrap();
        let r = validate_dataset(d.path());
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert_eq!(r.violations[0].kind, ViolationKind::Orthonormality);
        assert_eq!(r.violations[0].im_id, Some(0));
    }

    #[test]
    fn missing_mask_named() {
        let d = tempfile::tempdir().unwrap();
        write_fixture(d.path());
        let gone = d.path().join("mask_visib/000000_000000.png");
        std::fs::remove_file(&gone).unwrap();
        let r = validate_dataset(d.path());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::MissingFile);
        assert_eq!(r.violations[0].path, gone);
    }

    #[test]
    fn dimension_and_visibility_problems() {
        let d = tempfile::tempdir().unwrap();
        write_fixture(d.path());
        GrayImage::new(5, 5).save(d.path().join("mask/000000_000000.png")).unwrap();
        let p = d.path().join("scene_gt_info.json");
        let text = std::fs::read_to_string(&p).unwrap().replace("\"visib_fract\":1.0", "\"visib_fract\":1.5");
        std::fs::write(&p, text).unwrap();
        let kinds: Vec<_> = validate_dataset(d.path()).violations.into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::DimensionMismatch), "{kinds:?}");
        assert!(kinds.contains(&ViolationKind::VisibFraction), "{kinds:?}");
    }

    #[test]
    fn empty_directory_reports_no_scenes() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(validate_dataset(d.path()).violations[0].kind, ViolationKind::NoScenes);
    }
}
