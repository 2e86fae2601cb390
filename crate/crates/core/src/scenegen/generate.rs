use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::placement::{centroid, sample_cameras, sample_scene, PlacedObject};
use super::raster::{mask_bbox, rasterize, RenderInstance, Rendering};
use super::{SceneGenError, SceneSetup};
use crate::bop_io::{
    model_path, write_dataset_camera, write_models_info, write_scene, BopGtInfoEntry, BopScene, BopSceneCameraEntry,
    BopSceneGtEntry, DatasetCamera, ModelInfo, SceneImages,
};
use crate::geometry::{row_major, Pose};
use crate::mesh::{write_ply, PlyEncoding};

const BACKGROUND: [u8; 3] = [90, 90, 90];

/// Independent random stream for one scene.
pub fn scene_rng(seed: u64, scene_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_index as u64);
    rng
}

/// Placements and world-to-camera poses of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub objects: Vec<PlacedObject>,
    pub cameras: Vec<Pose>,
}

pub fn sample_scene_views(setup: &SceneSetup, scene_index: usize) -> Result<SceneSample, SceneGenError> {
    let mut rng = scene_rng(setup.seed, scene_index);
    let objects = sample_scene(setup, &mut rng)?;
    let centers: Vec<Vector3<f64>> = objects.iter().map(|o| o.center()).collect();
    let cameras = sample_cameras(setup, &centroid(&objects), &centers, &mut rng)?;
    Ok(SceneSample { objects, cameras })
}

/// One rendered image with its annotations. Rendering instance `i` is
/// `objects[i]`; `annotated[k]` is the object behind the k-th GT entry.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub rendering: Rendering,
    pub annotated: Vec<usize>,
    pub gt: Vec<BopSceneGtEntry>,
    pub gt_info: Vec<BopGtInfoEntry>,
    pub camera: BopSceneCameraEntry,
    pub images: SceneImages,
    /// Targets dropped because no pixel of them is visible.
    pub dropped_invisible: usize,
}

pub fn render_view(setup: &SceneSetup, sample: &SceneSample, camera_index: usize) -> RenderedView {
    let w2c = &sample.cameras[camera_index];
    let poses: Vec<Pose> = sample.objects.iter().map(|o| w2c.compose(&o.pose)).collect();
    let instances: Vec<RenderInstance<'_>> = sample
        .objects
        .iter()
        .zip(&poses)
        .map(|(o, pose)| RenderInstance { mesh: &setup.library[o.model].mesh, pose: *pose })
        .collect();
    let rendering = rasterize(&instances, &setup.camera);
    let depth = rendering.depth_image(setup.depth_scale);
    let colors: Vec<[u8; 3]> = sample.objects.iter().map(|o| setup.library[o.model].color).collect();
    let rgb = rendering.shade_rgb(&colors, BACKGROUND);

    let mut view = RenderedView {
        annotated: Vec::new(),
        gt: Vec::new(),
        gt_info: Vec::new(),
        camera: BopSceneCameraEntry {
            cam_K: setup.camera.k_row_major(),
            cam_R_w2c: Some(row_major(&w2c.rotation)),
            cam_t_w2c: Some([w2c.translation.x, w2c.translation.y, w2c.translation.z]),
            depth_scale: setup.depth_scale,
        },
        images: SceneImages { rgb, depth, masks: Vec::new(), masks_visib: Vec::new() },
        dropped_invisible: 0,
        rendering,
    };
    for (i, o) in sample.objects.iter().enumerate() {
        let Some(obj_id) = o.obj_id else { continue };
        let all = view.rendering.unoccluded_count(i);
        let visib = view.rendering.visible_count(i);
        if visib == 0 {
            view.dropped_invisible += 1;
            continue;
        }
        let mask = view.rendering.unoccluded_mask(i);
        let mask_visib = view.rendering.visible_mask(i);
        let valid =
            mask.enumerate_pixels().filter(|(x, y, p)| p.0[0] != 0 && view.images.depth.get_pixel(*x, *y).0[0] != 0).count();
        view.gt.push(BopSceneGtEntry::from_pose(obj_id, &poses[i]));
        view.gt_info.push(BopGtInfoEntry {
            bbox_obj: mask_bbox(&mask),
            bbox_visib: mask_bbox(&mask_visib),
            px_count_all: all as u64,
            px_count_valid: valid as u64,
            px_count_visib: visib as u64,
            visib_fract: visib as f64 / all as f64,
        });
        view.images.masks.push(mask);
        view.images.masks_visib.push(mask_visib);
        view.annotated.push(i);
    }
    view
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub scenes: usize,
    pub images: usize,
    pub annotated_instances: usize,
    pub dropped_invisible: usize,
    pub distractor_instances: usize,
}

fn write_models(setup: &SceneSetup, out: &Path) -> Result<(), SceneGenError> {
    let dir = out.join("models");
    let mut info = BTreeMap::new();
    for m in setup.targets() {
        let id = m.obj_id.expect("targets have ids");
        let path = model_path(&dir, id);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| crate::bop_io::BopError::Io { path: parent.to_path_buf(), source: e })?;
        }
        write_ply(&path, &m.mesh, PlyEncoding::BinaryLittleEndian).map_err(|source| SceneGenError::ModelLoad { path, source })?;
        info.insert(id, ModelInfo::of(&m.mesh));
    }
    write_models_info(&dir, &info)?;
    Ok(())
}

/// Writes `camera.json`, `models/` and `<split>/<scene>/` under `out`.
pub fn generate_dataset(setup: &SceneSetup, out: &Path) -> Result<DatasetSummary, SceneGenError> {
    let k = &setup.camera;
    write_dataset_camera(
        out,
        &DatasetCamera {
            cx: k.cx,
            cy: k.cy,
            depth_scale: setup.depth_scale,
            fx: k.fx,
            fy: k.fy,
            height: k.height,
            width: k.width,
        },
    )?;
    write_models(setup, out)?;

    let split_dir = out.join(&setup.split);
    let per_scene = crate::par::map_range(setup.scenes, |s| -> Result<DatasetSummary, SceneGenError> {
        let sample = sample_scene_views(setup, s)?;
        let views = crate::par::map_range(sample.cameras.len(), |c| render_view(setup, &sample, c));
        let mut scene = BopScene::default();
        let mut summary = DatasetSummary { scenes: 1, ..Default::default() };
        for (im, view) in views.into_iter().enumerate() {
            let im = im as u32;
            summary.images += 1;
            summary.annotated_instances += view.gt.len();
            summary.dropped_invisible += view.dropped_invisible;
            summary.distractor_instances += sample.objects.iter().filter(|o| o.is_distractor).count();
            scene.gt.insert(im, view.gt);
            scene.gt_info.insert(im, view.gt_info);
            scene.camera.insert(im, view.camera);
            scene.images.insert(im, view.images);
        }
        write_scene(&split_dir.join(format!("{s:06}")), &scene)?;
        Ok(summary)
    });
    let mut total = DatasetSummary::default();
    for s in per_scene {
        let s = s?;
        total.scenes += s.scenes;
        total.images += s.images;
        total.annotated_instances += s.annotated_instances;
        total.dropped_invisible += s.dropped_invisible;
        total.distractor_instances += s.distractor_instances;
    }
    Ok(total)
}
