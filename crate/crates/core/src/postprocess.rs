//! Decoding pose-head outputs, non-maximum suppression, and a timed
//! evaluation harness.
//!
//! No network runs here. The "forward" stage of the timing report measures
//! decoding plus metric scoring and stands in for network inference.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bop_io::{self, read_dataset_camera, read_results, read_scene, scene_dirs, BopError, ReadOptions, ResultRow};
use crate::geometry::{project, CameraIntrinsics, GeometryError, Pose};
use crate::losses::PoseParams;
use crate::mesh::PointSet;
use crate::metrics::{
    aggregate_report, match_and_score, render_table, score_images, GtInstance, ImageEval, MatchConfig, MetricsError,
    MetricsReport, ModelSet, ObjectModel, PointSource, PoseErrorRecord, PosePrediction,
};

/// IoU above which a lower-scored box of the same class is suppressed.
pub const DEFAULT_NMS_IOU: f64 = 0.65;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("invalid box {0:?}: need finite x_min <= x_max and y_min <= y_max")]
    InvalidBox([f64; 4]),
    #[error("IoU threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("scene {scene_id}, image {im_id}: {message}")]
    InvalidInput { scene_id: u32, im_id: u32, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bop(#[from] BopError),
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, PostprocessError> {
        let b = Self { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PostprocessError> {
        let v = [self.x_min, self.y_min, self.x_max, self.y_max];
        if v.iter().all(|c| c.is_finite()) && self.x_min <= self.x_max && self.y_min <= self.y_max {
            Ok(())
        } else {
            Err(PostprocessError::InvalidBox(v))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, PostprocessError> {
    a.validate()?;
    b.validate()?;
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    Ok(if union > 0.0 { (inter / union).clamp(0.0, 1.0) } else { 0.0 })
}

/// One predicted object instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub obj_id: u32,
    pub score: f64,
    pub bbox: BBox,
    pub params: PoseParams,
    #[serde(skip)]
    pub decoded: Option<Pose>,
}

impl Detection {
    fn validate(&self) -> Result<(), PostprocessError> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(PostprocessError::InvalidDetection(format!("score {} outside [0, 1]", self.score)));
        }
        self.bbox.validate()
    }

    /// Builds a detection from a known pose: parameters by encoding, box
    /// from the projection of the model points in front of the camera.
    pub fn from_pose(
        obj_id: u32,
        score: f64,
        pose: &Pose,
        points: &PointSet,
        k: &CameraIntrinsics,
    ) -> Result<Self, PostprocessError> {
        let params = PoseParams::encode(pose, k)?;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points.points() {
            if let Ok(uv) = project(&pose.transform_point(p), k) {
                x0 = x0.min(uv.x);
                y0 = y0.min(uv.y);
                x1 = x1.max(uv.x);
                y1 = y1.max(uv.y);
            }
        }
        if !x0.is_finite() {
            let c = params.center();
            (x0, y0, x1, y1) = (c.x, c.y, c.x, c.y);
        }
        let det = Self { obj_id, score, bbox: BBox::new(x0, y0, x1, y1)?, params, decoded: Some(*pose) };
        det.validate()?;
        Ok(det)
    }
}

/// Rotation from the 6D vector, translation from center and depth.
pub fn decode(det: &Detection, k: &CameraIntrinsics) -> Result<Pose, PostprocessError> {
    Ok(det.params.to_pose(k)?)
}

/// Greedy NMS. Detections are visited by descending score (ties keep input
/// order); one is kept iff its IoU with every kept detection — of the same
/// class when `per_class` — is at most `iou_threshold`. Output is in
/// visiting order.
pub fn nms(dets: &[Detection], iou_threshold: f64, per_class: bool) -> Result<Vec<Detection>, PostprocessError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(PostprocessError::InvalidThreshold(iou_threshold));
    }
    for d in dets {
        d.validate()?;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &dets[i];
        let mut keep = true;
        for k in &kept {
            if (!per_class || k.obj_id == d.obj_id) && iou(&k.bbox, &d.bbox)? > iou_threshold {
                keep = false;
                break;
            }
        }
        if keep {
            kept.push(*d);
        }
    }
    Ok(kept)
}

/// Average per-image stage times in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingReport {
    /// Decode + scoring, the stand-in for network forward time.
    pub avg_forward_ms: f64,
    pub avg_nms_ms: f64,
    pub avg_total_ms: f64,
    pub count: usize,
}

pub const FORWARD_ROW: &str = "Average Forward Time (decode + scoring analog, ms)";
pub const NMS_ROW: &str = "Average NMS Time (ms)";
pub const TOTAL_ROW: &str = "Average Inference Time (ms)";

impl TimingReport {
    pub fn to_json(&self) -> Value {
        json!({
            "avg_forward_ms": self.avg_forward_ms,
            "avg_nms_ms": self.avg_nms_ms,
            "avg_total_ms": self.avg_total_ms,
            "count": self.count,
        })
    }

    pub fn to_table(&self) -> String {
        render_table(&[
            (FORWARD_ROW.into(), format!("{:.3}", self.avg_forward_ms)),
            (NMS_ROW.into(), format!("{:.3}", self.avg_nms_ms)),
            (TOTAL_ROW.into(), format!("{:.3}", self.avg_total_ms)),
            ("images".into(), self.count.to_string()),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Nms,
    Forward,
    Total,
}

/// Receives each measured stage; all methods default to no-ops.
pub trait StageObserver {
    fn on_stage(&mut self, _image: usize, _stage: Stage, _elapsed: Duration) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;
impl StageObserver for NoopObserver {}

/// Ground truth, raw detections and camera of one image.
#[derive(Debug, Clone)]
pub struct TimedImage {
    pub scene_id: u32,
    pub im_id: u32,
    pub camera: CameraIntrinsics,
    pub gts: Vec<GtInstance>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub matching: MatchConfig,
    pub fractions: Vec<f64>,
    pub nms_iou: f64,
    pub per_class_nms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            fractions: crate::metrics::DEFAULT_FRACTIONS.to_vec(),
            nms_iou: DEFAULT_NMS_IOU,
            per_class_nms: true,
        }
    }
}

/// Runs NMS, decoding and scoring image by image, timing each stage.
/// Images are processed sequentially so the timings do not interfere.
pub fn timed_evaluate(
    images: &[TimedImage],
    models: &ModelSet,
    cfg: &EvalConfig,
    observer: &mut dyn StageObserver,
) -> Result<(MetricsReport, TimingReport), PostprocessError> {
    crate::metrics::validate_fractions(&cfg.fractions)?;
    let mut records: Vec<PoseErrorRecord> = Vec::new();
    let (mut forward, mut nms_time, mut total) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    for (i, im) in images.iter().enumerate() {
        let start = Instant::now();
        let kept = nms(&im.detections, cfg.nms_iou, cfg.per_class_nms)?;
        let after_nms = Instant::now();
        let preds = kept
            .iter()
            .map(|d| Ok(PosePrediction { obj_id: d.obj_id, score: d.score, pose: decode(d, &im.camera)? }))
            .collect::<Result<Vec<_>, PostprocessError>>()?;
        let recs = match_and_score(&im.gts, &preds, models, &cfg.matching)?;
        let end = Instant::now();
        let (n, f, t) = (after_nms - start, end - after_nms, end - start);
        observer.on_stage(i, Stage::Nms, n);
        observer.on_stage(i, Stage::Forward, f);
        observer.on_stage(i, Stage::Total, t);
        nms_time += n;
        forward += f;
        total += t;
        records.extend(recs);
    }
    let report = aggregate_report(&records, 0, &cfg.fractions, cfg.matching.metric)?;
    let count = images.len();
    let avg = |d: Duration| if count == 0 { 0.0 } else { d.as_secs_f64() * 1e3 / count as f64 };
    let timing = TimingReport { avg_forward_ms: avg(forward), avg_nms_ms: avg(nms_time), avg_total_ms: avg(total), count };
    Ok((report, timing))
}

/// Ground truth and predictions of one image.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub scene_id: u32,
    pub im_id: u32,
    pub camera: CameraIntrinsics,
    pub gts: Vec<GtInstance>,
    pub predictions: Vec<PosePrediction>,
}

/// Everything needed to evaluate a results file against a dataset.
#[derive(Debug, Clone)]
pub struct EvaluationInputs {
    pub images: Vec<EvalImage>,
    pub models: ModelSet,
    /// Result rows whose (scene, image) has no ground truth.
    pub unmatched_rows: usize,
}

fn scene_id_of(dir: &Path) -> Option<u32> {
    dir.file_name()?.to_str()?.parse().ok()
}

/// Loads ground truth from every scene under `dataset` (restricted to
/// `split` when given), the models from `models_dir`, and the predictions
/// from `results`. Image size comes from `camera.json` at the dataset root
/// when present, otherwise from the principal point.
pub fn load_evaluation_inputs(
    dataset: &Path,
    split: Option<&str>,
    models_dir: &Path,
    results: &Path,
    points: PointSource,
) -> Result<EvaluationInputs, PostprocessError> {
    let meshes = bop_io::load_models(models_dir)?;
    let models: ModelSet =
        crate::par::map(&meshes.iter().collect::<Vec<_>>(), |(id, mesh)| ObjectModel::new(**id, mesh, points).map(|m| (**id, m)))
            .into_iter()
            .collect::<Result<_, _>>()?;

    let size = read_dataset_camera(dataset).ok().map(|c| (c.width, c.height));
    let mut by_image: BTreeMap<(u32, u32), Vec<PosePrediction>> = BTreeMap::new();
    for row in read_results(results)? {
        by_image.entry((row.scene_id, row.im_id)).or_default().push(PosePrediction {
            obj_id: row.obj_id,
            score: row.score,
            pose: row.pose(),
        });
    }

    let root = split.map_or_else(|| dataset.to_path_buf(), |s| dataset.join(s));
    let mut images = Vec::new();
    for dir in scene_dirs(&root) {
        let Some(scene_id) = scene_id_of(&dir) else { continue };
        let scene = read_scene(&dir, ReadOptions::default())?;
        for (&im_id, entries) in &scene.gt {
            let cam = &scene.camera[&im_id];
            let (w, h) = size.unwrap_or(((2.0 * cam.cam_K[2] + 1.0).max(1.0) as u32, (2.0 * cam.cam_K[5] + 1.0).max(1.0) as u32));
            let camera = cam.intrinsics(w, h);
            camera.validate()?;
            images.push(EvalImage {
                scene_id,
                im_id,
                camera,
                gts: entries.iter().map(|e| GtInstance { obj_id: e.obj_id, pose: e.pose() }).collect(),
                predictions: by_image.remove(&(scene_id, im_id)).unwrap_or_default(),
            });
        }
    }
    let unmatched_rows = by_image.values().map(Vec::len).sum();
    Ok(EvaluationInputs { images, models, unmatched_rows })
}

/// Scores the loaded predictions as given, without NMS.
pub fn evaluate_inputs(
    inputs: &EvaluationInputs,
    cfg: &MatchConfig,
    fractions: &[f64],
) -> Result<MetricsReport, PostprocessError> {
    let evals: Vec<ImageEval> =
        inputs.images.iter().map(|im| ImageEval { gts: im.gts.clone(), preds: im.predictions.clone() }).collect();
    let records = score_images(&evals, &inputs.models, cfg)?;
    Ok(aggregate_report(&records, 0, fractions, cfg.metric)?)
}

/// Turns loaded predictions back into raw detections (6D parameters and a
/// box from the projected model points) for the timed pipeline.
pub fn to_timed_images(inputs: &EvaluationInputs) -> Result<Vec<TimedImage>, PostprocessError> {
    inputs
        .images
        .iter()
        .map(|im| {
            let detections = im
                .predictions
                .iter()
                .map(|p| {
                    let model = inputs.models.get(&p.obj_id).ok_or(MetricsError::UnknownObjectId(p.obj_id))?;
                    Detection::from_pose(p.obj_id, p.score, &p.pose, &model.points, &im.camera).map_err(|e| {
                        PostprocessError::InvalidInput {
                            scene_id: im.scene_id,
                            im_id: im.im_id,
                            message: format!("object {}: {e}", p.obj_id),
                        }
                    })
                })
                .collect::<Result<Vec<_>, PostprocessError>>()?;
            Ok(TimedImage { scene_id: im.scene_id, im_id: im.im_id, camera: im.camera, gts: im.gts.clone(), detections })
        })
        .collect()
}

/// Converts ground-truth annotations into result rows with score 1.
pub fn ground_truth_as_results(dataset: &Path) -> Result<Vec<ResultRow>, PostprocessError> {
    let mut rows = Vec::new();
    for dir in scene_dirs(dataset) {
        let Some(scene_id) = scene_id_of(&dir) else { continue };
        let scene = read_scene(&dir, ReadOptions::default())?;
        for (&im_id, entries) in &scene.gt {
            for e in entries {
                rows.push(ResultRow::from_pose(scene_id, im_id, e.obj_id, 1.0, &e.pose(), -1.0));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, Rot6D};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics { fx: 600.0, fy: 610.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    fn det(obj_id: u32, score: f64, b: [f64; 4]) -> Detection {
        Detection {
            obj_id,
            score,
            bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            params: PoseParams { r6: Rot6D::identity(), center: [320.0, 240.0], tz: 1000.0 },
            decoded: None,
        }
    }

    /// Quadratic reference: suppression flags over the sorted list.
    fn reference_nms(dets: &[Detection], thr: f64, per_class: bool) -> Vec<Detection> {
        let mut idx: Vec<usize> = (0..dets.len()).collect();
        idx.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
        let mut suppressed = vec![false; idx.len()];
        for i in 0..idx.len() {
            if suppressed[i] {
                continue;
            }
            for j in i + 1..idx.len() {
                let (a, b) = (&dets[idx[i]], &dets[idx[j]]);
                if (!per_class || a.obj_id == b.obj_id) && iou(&a.bbox, &b.bbox).unwrap() > thr {
                    suppressed[j] = true;
                }
            }
        }
        idx.iter().zip(&suppressed).filter(|(_, s)| !**s).map(|(i, _)| dets[*i]).collect()
    }

    fn random_dets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Detection> {
        (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
                let (w, h) = (rng.random_range(5.0..60.0), rng.random_range(5.0..60.0));
                // coarse scores force ties
                let score = (rng.random_range(0..20) as f64) / 19.0;
                det(rng.random_range(1..4), score, [x, y, x + w, y + h])
            })
            .collect()
    }

    #[test]
    fn decode_examples() {
        let d = det(1, 0.5, [0.0, 0.0, 1.0, 1.0]);
        let p = decode(&d, &k()).unwrap();
        assert_eq!(p.rotation, nalgebra::Matrix3::identity());
        assert_eq!(p.translation, Vector3::new(0.0, 0.0, 1000.0));
        let mut bad = d;
        bad.params.tz = 0.0;
        assert!(matches!(decode(&bad, &k()), Err(PostprocessError::Geometry(GeometryError::NonPositiveDepth(_)))));
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::new(2.0, 2.0, 3.0, 3.0).unwrap()).unwrap(), 0.0);
        assert!((iou(&a, &BBox::new(0.5, 0.0, 1.5, 1.0).unwrap()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(BBox::new(1.0, 0.0, 0.0, 1.0), Err(PostprocessError::InvalidBox(_))));
    }

    #[test]
    fn nms_examples() {
        let out = nms(&[det(1, 0.8, [0.0, 0.0, 10.0, 10.0]), det(1, 0.9, [0.0, 0.0, 10.0, 10.0])], 0.5, true).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
        let disjoint = [det(1, 0.3, [0.0, 0.0, 1.0, 1.0]), det(1, 0.4, [5.0, 5.0, 6.0, 6.0])];
        assert_eq!(nms(&disjoint, 0.5, true).unwrap().len(), 2);
        // different classes do not suppress each other per class
        let overlap = [det(1, 0.8, [0.0, 0.0, 10.0, 10.0]), det(2, 0.7, [0.0, 0.0, 10.0, 10.0])];
        assert_eq!(nms(&overlap, 0.5, true).unwrap().len(), 2);
        assert_eq!(nms(&overlap, 0.5, false).unwrap().len(), 1);
        assert!(matches!(nms(&overlap, 0.0, true), Err(PostprocessError::InvalidThreshold(_))));
        assert!(matches!(nms(&[det(1, 1.5, [0.0, 0.0, 1.0, 1.0])], 0.5, true), Err(PostprocessError::InvalidDetection(_))));
    }

    #[test]
    fn nms_matches_reference() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets = random_dets(&mut rng, 200);
            for per_class in [true, false] {
                let out = nms(&dets, 0.45, per_class).unwrap();
                assert_eq!(out, reference_nms(&dets, 0.45, per_class));
                assert_eq!(nms(&out, 0.45, per_class).unwrap(), out);
                assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
            }
        }
    }

    #[test]
    fn timing_on_empty_input() {
        let (report, timing) = timed_evaluate(&[], &ModelSet::new(), &EvalConfig::default(), &mut NoopObserver).unwrap();
        assert_eq!(timing, TimingReport::default());
        assert_eq!(report.instance_count, 0);
        let table = timing.to_table();
        for row in [FORWARD_ROW, NMS_ROW, TOTAL_ROW] {
            assert!(table.contains(row));
        }
    }

    #[test]
    fn timed_evaluation_scores_and_times() {
        struct Count(usize);
        impl StageObserver for Count {
            fn on_stage(&mut self, _: usize, _: Stage, _: Duration) {
                self.0 += 1;
            }
        }
        let mesh = crate::mesh::shapes::strawberry(30.0, 36.0, 8, 10);
        let model = ObjectModel::new(1, &mesh, PointSource::Sampled { count: 300, seed: 1 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let images: Vec<TimedImage> = (0..5)
            .map(|i| {
                let pose = Pose { rotation: random_rotation(&mut rng), translation: Vector3::new(10.0, -5.0, 500.0) };
                let good = Detection::from_pose(1, 0.9, &pose, &model.points, &k()).unwrap();
                let mut dup = good;
                dup.score = 0.5;
                TimedImage {
                    scene_id: 0,
                    im_id: i,
                    camera: k(),
                    gts: vec![GtInstance { obj_id: 1, pose }],
                    detections: vec![dup, good],
                }
            })
            .collect();
        let mut models = ModelSet::new();
        models.insert(1, model);
        let mut obs = Count(0);
        let (report, timing) = timed_evaluate(&images, &models, &EvalConfig::default(), &mut obs).unwrap();
        assert_eq!(obs.0, 15);
        assert_eq!(timing.count, 5);
        assert!(timing.avg_total_ms >= timing.avg_nms_ms && timing.avg_nms_ms >= 0.0);
        assert!(report.thresholds.iter().all(|t| t.rate == 1.0));
        // the 6D encode/decode round trip costs a few ulps
        assert!(report.rotation_error_avg.unwrap() < 1e-9);
    }

    #[test]
    fn dataset_evaluation_round_trip() {
        use crate::scenegen::{generate_dataset, IntrinsicsSpec, ModelSpec, SceneConfig};
        let cfg = SceneConfig {
            models: vec![ModelSpec::shape("strawberry", 3), ModelSpec::shape("sphere", 1)],
            distractors: vec![],
            plane_mm: 250.0,
            cameras: 3,
            radius_mm: [350.0, 450.0],
            image: [160, 120],
            intrinsics: IntrinsicsSpec { fx: 200.0, fy: 200.0, cx: 79.5, cy: 59.5 },
            seed: 5,
            scenes: 2,
            depth_scale: 0.1,
            split: "train_pbr".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let summary = generate_dataset(&cfg.resolve(Path::new(".")).unwrap(), dir.path()).unwrap();
        let rows = ground_truth_as_results(dir.path()).unwrap();
        assert_eq!(rows.len(), summary.annotated_instances);
        let csv = dir.path().join("gt.csv");
        crate::bop_io::write_results(&csv, &rows).unwrap();
        let points = PointSource::Sampled { count: 500, seed: 0 };
        let models = dir.path().join("models");

        let inputs = load_evaluation_inputs(dir.path(), Some("train_pbr"), &models, &csv, points).unwrap();
        assert_eq!(inputs.images.len(), 6);
        assert_eq!(inputs.unmatched_rows, 0);
        let report = evaluate_inputs(&inputs, &MatchConfig::default(), &crate::metrics::DEFAULT_FRACTIONS).unwrap();
        assert!(report.thresholds.iter().all(|t| t.rate == 1.0));
        assert_eq!(report.rotation_error_avg, Some(0.0));
        assert_eq!(report.translation_error_avg, Some(0.0));

        let timed = to_timed_images(&inputs).unwrap();
        let (timed_report, timing) = timed_evaluate(&timed, &inputs.models, &EvalConfig::default(), &mut NoopObserver).unwrap();
        assert_eq!(timing.count, 6);
        assert_eq!(timed_report.instance_count, report.instance_count);

        // an empty results file scores nothing
        crate::bop_io::write_results(&csv, &[]).unwrap();
        let empty = load_evaluation_inputs(dir.path(), None, &models, &csv, points).unwrap();
        let report = evaluate_inputs(&empty, &MatchConfig::default(), &crate::metrics::DEFAULT_FRACTIONS).unwrap();
        assert!(report.thresholds.iter().all(|t| t.rate == 0.0));
        assert_eq!(report.unmatched_gt_count, summary.annotated_instances);
    }

    proptest! {
        #[test]
        fn decode_encode_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = Pose {
                rotation: random_rotation(&mut rng),
                translation: Vector3::new(rng.random_range(-300.0..300.0), rng.random_range(-200.0..200.0), rng.random_range(100.0..3000.0)),
            };
            let pts = PointSet::new(vec![Vector3::new(1.0, 2.0, 3.0)]).unwrap();
            let d = Detection::from_pose(3, 0.7, &pose, &pts, &k()).unwrap();
            let back = decode(&d, &k()).unwrap();
            prop_assert!((back.rotation - pose.rotation).abs().max() <= 1e-9);
            prop_assert!((back.translation - pose.translation).abs().max() <= 1e-9 * pose.translation.norm());
        }

        #[test]
        fn nms_is_idempotent_subset(seed in any::<u64>(), thr in 0.05f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dets = random_dets(&mut rng, 60);
            let out = nms(&dets, thr, true).unwrap();
            prop_assert!(out.iter().all(|d| dets.contains(d)));
            prop_assert_eq!(nms(&out, thr, true).unwrap(), out);
        }
    }
}
