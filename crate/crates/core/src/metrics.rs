//! ADD / ADD-S pose correctness, rotation and translation errors, and
//! aggregation into a per-dataset report.
//!
//! Distances are mean Euclidean (mm) by default; [`DistanceMode::Squared`]
//! gives the squared variant used by the training loss. A pose counts as
//! correct at fraction `f` when its error is strictly below `f · diameter`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geometry::{check_rotation, GeometryError, Pose, ROTATION_TOL};
use crate::mesh::{self, Mesh, MeshError, NnIndex, PointSet, DEFAULT_SAMPLE_COUNT};

/// Threshold fractions of the object diameter reported by default.
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("diameter must be positive, got {0}")]
    NonPositiveDiameter(f64),
    #[error("threshold fraction must be positive, got {0}")]
    NonPositiveFraction(f64),
    #[error("threshold fractions must be strictly increasing and in (0, 1]: {0:?}")]
    InvalidFractions(Vec<f64>),
    #[error("no model for object id {0}")]
    UnknownObjectId(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMode {
    #[default]
    Euclidean,
    Squared,
}

impl DistanceMode {
    #[inline]
    fn apply(self, sq: f64) -> f64 {
        match self {
            DistanceMode::Euclidean => sq.sqrt(),
            DistanceMode::Squared => sq,
        }
    }
}

/// Which error drives thresholds and matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MetricKind {
    /// Corresponding-point distance, for objects without symmetries.
    Add,
    /// Closest-point distance, for symmetric objects.
    #[default]
    AddS,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Add => "ADD",
            MetricKind::AddS => "ADD-S",
        }
    }
}

#[inline]
fn dist_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

/// Mean distance between corresponding model points under both poses (mm).
pub fn add_error(pred: &Pose, gt: &Pose, pts: &PointSet) -> Result<f64, MetricsError> {
    add_error_with(pred, gt, pts, DistanceMode::Euclidean)
}

pub fn add_error_with(pred: &Pose, gt: &Pose, pts: &PointSet, mode: DistanceMode) -> Result<f64, MetricsError> {
    if pts.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let sum: f64 = pts.points().iter().map(|x| mode.apply(dist_sq(&pred.transform_point(x), &gt.transform_point(x)))).sum();
    Ok(sum / pts.len() as f64)
}

/// Mean distance from each predicted-pose point to the closest ground-truth
/// point (mm). `gt_index` must be built over `pts` transformed by `gt`.
pub fn adds_error(pred: &Pose, gt: &Pose, pts: &PointSet, gt_index: &NnIndex) -> Result<f64, MetricsError> {
    adds_error_with(pred, gt, pts, gt_index, DistanceMode::Euclidean)
}

pub fn adds_error_with(
    pred: &Pose,
    _gt: &Pose,
    pts: &PointSet,
    gt_index: &NnIndex,
    mode: DistanceMode,
) -> Result<f64, MetricsError> {
    if pts.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let sum: f64 = pts.points().iter().map(|x| mode.apply(gt_index.nearest_distance_sq(&pred.transform_point(x)))).sum();
    Ok(sum / pts.len() as f64)
}

/// `error < fraction · diameter`.
pub fn pose_correct(error: f64, diameter: f64, fraction: f64) -> Result<bool, MetricsError> {
    if !(diameter > 0.0) {
        return Err(MetricsError::NonPositiveDiameter(diameter));
    }
    if !(fraction > 0.0) {
        return Err(MetricsError::NonPositiveFraction(fraction));
    }
    Ok(error < fraction * diameter)
}

/// Geodesic angle between two rotations in degrees, `arccos((tr(RᵀR̂) − 1) / 2)`.
///
/// Near 0° and 180° the cosine is flat, so there the same angle is taken
/// from `atan2(sin, cos)` with the sine read off the skew part of `RᵀR̂`.
pub fn rotation_error(r: &Matrix3<f64>, r_hat: &Matrix3<f64>) -> Result<f64, MetricsError> {
    check_rotation(r, ROTATION_TOL)?;
    check_rotation(r_hat, ROTATION_TOL)?;
    let m = r.transpose() * r_hat;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = if cos.abs() <= 0.5 {
        cos.acos()
    } else {
        let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let sin = axis.norm() / 2.0;
        sin.atan2(cos)
    };
    Ok(angle.to_degrees())
}

/// `‖t − t̂‖₂` in mm.
pub fn translation_error(t: &Vector3<f64>, t_hat: &Vector3<f64>) -> f64 {
    (t - t_hat).norm()
}

/// Where the evaluation points of an object come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSource {
    /// Area-weighted surface samples.
    Sampled { count: usize, seed: u64 },
    /// The raw mesh vertices.
    Vertices,
}

impl Default for PointSource {
    fn default() -> Self {
        PointSource::Sampled { count: DEFAULT_SAMPLE_COUNT, seed: 0 }
    }
}

/// Evaluation points of one object with a model-frame nearest-neighbor index.
///
/// ADD-S uses the identity `min‖R_p x + t_p − (R_g y + t_g)‖ =
/// min‖R_gᵀ(R_p x + t_p − t_g) − y‖`, so one index in model coordinates
/// serves every ground-truth pose.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub obj_id: u32,
    pub points: PointSet,
    pub diameter: f64,
    index: NnIndex,
    /// `points` in the index's leaf order, so consecutive ADD-S queries land
    /// in neighboring cells.
    query_points: Vec<Vector3<f64>>,
}

impl ObjectModel {
    pub fn new(obj_id: u32, mesh: &Mesh, source: PointSource) -> Result<Self, MetricsError> {
        let points = match source {
            PointSource::Sampled { count, seed } => mesh::sample_points(mesh, count, seed)?,
            PointSource::Vertices => mesh.vertex_points()?,
        };
        let diameter = mesh::mesh_diameter(mesh)?;
        Self::from_points(obj_id, points, diameter)
    }

    pub fn from_points(obj_id: u32, points: PointSet, diameter: f64) -> Result<Self, MetricsError> {
        if !(diameter > 0.0) {
            return Err(MetricsError::NonPositiveDiameter(diameter));
        }
        let index = NnIndex::build(&points)?;
        let query_points = index.tree_order().iter().map(|&i| points.points()[i]).collect();
        Ok(Self { obj_id, points, diameter, index, query_points })
    }

    pub fn add_error(&self, pred: &Pose, gt: &Pose, mode: DistanceMode) -> f64 {
        add_error_with(pred, gt, &self.points, mode).expect("point set is non-empty")
    }

    pub fn adds_error(&self, pred: &Pose, gt: &Pose, mode: DistanceMode) -> f64 {
        // Map predicted points into the ground-truth model frame.
        let rel = gt.inverse().compose(pred);
        let sum: f64 = self
            .query_points
            .iter()
            .map(|x| {
                // x itself is a stored point, so its distance bounds the search.
                let q = rel.transform_point(x);
                mode.apply(self.index.nearest_distance_sq_within(&q, (q - x).norm_squared()))
            })
            .sum();
        sum / self.query_points.len() as f64
    }

    pub fn error(&self, kind: MetricKind, pred: &Pose, gt: &Pose, mode: DistanceMode) -> f64 {
        match kind {
            MetricKind::Add => self.add_error(pred, gt, mode),
            MetricKind::AddS => self.adds_error(pred, gt, mode),
        }
    }
}

/// Object models keyed by object id.
pub type ModelSet = BTreeMap<u32, ObjectModel>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtInstance {
    pub obj_id: u32,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePrediction {
    pub obj_id: u32,
    pub score: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub metric: MetricKind,
    pub distance: DistanceMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { metric: MetricKind::AddS, distance: DistanceMode::Euclidean }
    }
}

/// Outcome for one ground-truth instance.
///
/// Unmatched instances carry infinite distance errors and a 180° rotation
/// error; they fail every threshold and are excluded from error averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseErrorRecord {
    pub obj_id: u32,
    /// Position of the instance in the image's ground-truth list.
    pub gt_index: usize,
    pub adds_error: f64,
    pub rotation_error: f64,
    pub translation_error: f64,
    pub diameter: f64,
    pub matched: bool,
}

fn pose_key(p: &PosePrediction) -> [f64; 12] {
    let mut k = [0.0; 12];
    k[..9].copy_from_slice(&p.pose.rotation_row_major());
    k[9..].copy_from_slice(p.pose.translation.as_slice());
    k
}

/// Greedy per-class matching of predictions to ground truth in one image.
///
/// Predictions are visited by descending score; each claims the unclaimed
/// ground-truth instance of its class with the lowest error. Ties in score
/// are broken by pose values, so the result does not depend on input order.
/// One record per ground-truth instance is returned, in ground-truth order.
pub fn match_and_score(
    gts: &[GtInstance],
    preds: &[PosePrediction],
    models: &ModelSet,
    cfg: &MatchConfig,
) -> Result<Vec<PoseErrorRecord>, MetricsError> {
    for id in gts.iter().map(|g| g.obj_id).chain(preds.iter().map(|p| p.obj_id)) {
        if !models.contains_key(&id) {
            return Err(MetricsError::UnknownObjectId(id));
        }
    }
    let mut order: Vec<&PosePrediction> = preds.iter().collect();
    order.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then(a.obj_id.cmp(&b.obj_id)).then_with(|| {
            let (ka, kb) = (pose_key(a), pose_key(b));
            ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let mut records: Vec<PoseErrorRecord> = gts
        .iter()
        .enumerate()
        .map(|(i, g)| PoseErrorRecord {
            obj_id: g.obj_id,
            gt_index: i,
            adds_error: f64::INFINITY,
            rotation_error: 180.0,
            translation_error: f64::INFINITY,
            diameter: models[&g.obj_id].diameter,
            matched: false,
        })
        .collect();

    for pred in order {
        let model = &models[&pred.obj_id];
        let best = gts
            .iter()
            .enumerate()
            .filter(|(i, g)| g.obj_id == pred.obj_id && !records[*i].matched)
            .map(|(i, g)| (i, model.error(cfg.metric, &pred.pose, &g.pose, cfg.distance)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((i, err)) = best {
            let g = &gts[i];
            records[i] = PoseErrorRecord {
                obj_id: g.obj_id,
                gt_index: i,
                adds_error: err,
                rotation_error: rotation_error(&g.pose.rotation, &pred.pose.rotation)?,
                translation_error: translation_error(&g.pose.translation, &pred.pose.translation),
                diameter: model.diameter,
                matched: true,
            };
        }
    }
    Ok(records)
}

/// Ground truth and predictions of one image.
#[derive(Debug, Clone, Default)]
pub struct ImageEval {
    pub gts: Vec<GtInstance>,
    pub preds: Vec<PosePrediction>,
}

/// Scores many images, in parallel when enabled. Output order matches input.
pub fn score_images(images: &[ImageEval], models: &ModelSet, cfg: &MatchConfig) -> Result<Vec<PoseErrorRecord>, MetricsError> {
    let per_image = crate::par::map(images, |im| match_and_score(&im.gts, &im.preds, models, cfg));
    let mut out = Vec::new();
    for r in per_image {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRate {
    pub fraction: f64,
    pub rate: f64,
}

/// Aggregate scores shaped like the usual ADD-S comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metric: MetricKind,
    pub thresholds: Vec<ThresholdRate>,
    /// Mean over matched instances (degrees); `None` if nothing matched.
    pub rotation_error_avg: Option<f64>,
    /// Mean over matched instances (mm); `None` if nothing matched.
    pub translation_error_avg: Option<f64>,
    /// All ground-truth instances, matched or not.
    pub instance_count: usize,
    pub unmatched_gt_count: usize,
}

pub fn validate_fractions(fractions: &[f64]) -> Result<(), MetricsError> {
    let ok =
        !fractions.is_empty() && fractions.iter().all(|f| *f > 0.0 && *f <= 1.0) && fractions.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(MetricsError::InvalidFractions(fractions.to_vec()))
    }
}

/// Threshold rates over `records.len() + misses` instances; error averages
/// over matched records only. `misses` counts ground truth that has no record.
pub fn aggregate_report(
    records: &[PoseErrorRecord],
    misses: usize,
    fractions: &[f64],
    metric: MetricKind,
) -> Result<MetricsReport, MetricsError> {
    validate_fractions(fractions)?;
    let total = records.len() + misses;
    let matched: Vec<&PoseErrorRecord> = records.iter().filter(|r| r.matched).collect();
    let mut thresholds = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut correct = 0usize;
        for r in &matched {
            if pose_correct(r.adds_error, r.diameter, fraction)? {
                correct += 1;
            }
        }
        let rate = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        thresholds.push(ThresholdRate { fraction, rate });
    }
    let avg = |f: fn(&PoseErrorRecord) -> f64| {
        (!matched.is_empty()).then(|| matched.iter().map(|r| f(r)).sum::<f64>() / matched.len() as f64)
    };
    Ok(MetricsReport {
        metric,
        thresholds,
        rotation_error_avg: avg(|r| r.rotation_error),
        translation_error_avg: avg(|r| r.translation_error),
        instance_count: total,
        unmatched_gt_count: total - matched.len(),
    })
}

/// `0.1 → "0p1"`.
pub fn fraction_tag(fraction: f64) -> String {
    format!("{fraction}").replace('.', "p")
}

pub const ROTATION_ROW: &str = "rotation_error_avg (in degrees)";
pub const TRANSLATION_ROW: &str = "translation_error_avg (in mm)";

impl MetricsReport {
    pub fn row_name(&self, fraction: f64) -> String {
        format!("{}_{}_avg", self.metric.label(), fraction_tag(fraction))
    }

    pub fn rate(&self, fraction: f64) -> Option<f64> {
        self.thresholds.iter().find(|t| t.fraction == fraction).map(|t| t.rate)
    }

    /// Flat JSON object; rows appear in table order.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for t in &self.thresholds {
            m.insert(self.row_name(t.fraction), json!(t.rate));
        }
        m.insert("rotation_error_avg".into(), json!(self.rotation_error_avg));
        m.insert("translation_error_avg".into(), json!(self.translation_error_avg));
        m.insert("instance_count".into(), json!(self.instance_count));
        m.insert("unmatched_gt_count".into(), json!(self.unmatched_gt_count));
        Value::Object(m)
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> =
            self.thresholds.iter().map(|t| (self.row_name(t.fraction), format!("{:.4}", t.rate))).collect();
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"));
        rows.push((ROTATION_ROW.into(), fmt_opt(self.rotation_error_avg)));
        rows.push((TRANSLATION_ROW.into(), fmt_opt(self.translation_error_avg)));
        rows.push(("instance_count".into(), self.instance_count.to_string()));
        rows.push(("unmatched_gt_count".into(), self.unmatched_gt_count.to_string()));
        render_table(&rows)
    }
}

/// Two-column `Metric | Value` text table.
pub fn render_table(rows: &[(String, String)]) -> String {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Metric".len());
    let vw = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("Value".len());
    let mut s = String::new();
    let _ = writeln!(s, "{:<w$}  {:>vw$}", "Metric", "Value");
    let _ = writeln!(s, "{}  {}", "-".repeat(w), "-".repeat(vw));
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<w$}  {v:>vw$}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, rot_z};
    use crate::mesh::shapes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        Pose::new(
            random_rotation(rng),
            Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(300.0..900.0)),
        )
        .unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
        PointSet::new(
            (0..n)
                .map(|_| {
                    Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0))
                })
                .collect(),
        )
        .unwrap()
    }

    fn quat_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let q1 = nalgebra::UnitQuaternion::from_matrix(a);
        let q2 = nalgebra::UnitQuaternion::from_matrix(b);
        let rel = q1.inverse() * q2;
        let v = rel.imag().norm();
        (2.0 * v.atan2(rel.w.abs())).to_degrees()
    }

    #[test]
    fn add_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_cloud(&mut rng, 100);
        let gt = random_pose(&mut rng);
        assert_eq!(add_error(&gt, &gt, &pts).unwrap(), 0.0);
        let mut pred = gt;
        pred.translation.z += 7.0;
        assert!((add_error(&pred, &gt, &pts).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn add_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_cloud(&mut rng, 100);
        for _ in 0..20 {
            let (p, g) = (random_pose(&mut rng), random_pose(&mut rng));
            let mut acc = 0.0;
            for x in pts.points() {
                let a = p.rotation * x + p.translation;
                let b = g.rotation * x + g.translation;
                acc += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            }
            let oracle = acc / 100.0;
            let v = add_error(&p, &g, &pts).unwrap();
            assert!((v - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn adds_circle_symmetry() {
        let pts = PointSet::new(
            (0..360)
                .map(|i| {
                    let a = (i as f64).to_radians();
                    Vector3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0)
                })
                .collect(),
        )
        .unwrap();
        let gt = Pose::new(random_rotation(&mut ChaCha8Rng::seed_from_u64(5)), Vector3::new(1.0, 2.0, 500.0)).unwrap();
        let idx = NnIndex::build(&pts.transformed(&gt)).unwrap();
        for deg in [1.0, 17.0, 90.0, 133.0] {
            // Rotations by multiples of 1° map the sample set onto itself.
            let pred = Pose { rotation: gt.rotation * rot_z(f64::to_radians(deg)), translation: gt.translation };
            assert!(adds_error(&pred, &gt, &pts, &idx).unwrap() <= 1e-9);
            assert!(add_error(&pred, &gt, &pts).unwrap() > 0.0);
        }
    }

    #[test]
    fn pose_correct_examples() {
        assert!(pose_correct(1.0, 100.0, 0.1).unwrap());
        assert!(!pose_correct(10.0, 100.0, 0.1).unwrap());
        assert!(matches!(pose_correct(1.0, 0.0, 0.1), Err(MetricsError::NonPositiveDiameter(_))));
    }

    #[test]
    fn rotation_error_examples() {
        let i = Matrix3::identity();
        assert_eq!(rotation_error(&i, &i).unwrap(), 0.0);
        let r180 = rot_z(std::f64::consts::PI);
        assert!((rotation_error(&i, &r180).unwrap() - 180.0).abs() < 1e-12);
        assert!(rotation_error(&(i * 2.0), &i).is_err());
    }

    #[test]
    fn rotation_error_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let e = rotation_error(&a, &b).unwrap();
            assert!((e - quat_angle_deg(&a, &b)).abs() <= 1e-6);
            assert!((e - rotation_error(&b, &a).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn translation_error_examples() {
        let z = Vector3::zeros();
        assert_eq!(translation_error(&z, &z), 0.0);
        let t = Vector3::new(3.0, 4.0, 0.0);
        assert_eq!(translation_error(&z, &t), 5.0);
        assert_eq!(translation_error(&t, &z), 5.0);
    }

    fn models() -> ModelSet {
        let mut m = ModelSet::new();
        m.insert(
            1,
            ObjectModel::new(1, &shapes::strawberry(30.0, 36.0, 10, 12), PointSource::Sampled { count: 300, seed: 1 }).unwrap(),
        );
        m.insert(2, ObjectModel::new(2, &shapes::cube(30.0), PointSource::Vertices).unwrap());
        m
    }

    #[test]
    fn match_exact_and_missing() {
        let models = models();
        let gt = GtInstance { obj_id: 1, pose: Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 500.0)).unwrap() };
        let recs =
            match_and_score(&[gt], &[PosePrediction { obj_id: 1, score: 0.9, pose: gt.pose }], &models, &MatchConfig::default())
                .unwrap();
        assert_eq!(recs.len(), 1);
        assert!(
            recs[0].matched && recs[0].adds_error == 0.0 && recs[0].rotation_error == 0.0 && recs[0].translation_error == 0.0
        );

        let recs = match_and_score(&[gt], &[], &models, &MatchConfig::default()).unwrap();
        let rep = aggregate_report(&recs, 0, &DEFAULT_FRACTIONS, MetricKind::AddS).unwrap();
        assert_eq!(rep.unmatched_gt_count, 1);
        assert!(rep.thresholds.iter().all(|t| t.rate == 0.0));
        assert_eq!(rep.rotation_error_avg, None);
    }

    #[test]
    fn unknown_object() {
        let gt = GtInstance { obj_id: 9, pose: Pose::identity() };
        assert!(matches!(match_and_score(&[gt], &[], &models(), &MatchConfig::default()), Err(MetricsError::UnknownObjectId(9))));
    }

    #[test]
    fn matching_is_order_invariant() {
        let models = models();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let gts: Vec<_> = (0..4).map(|i| GtInstance { obj_id: 1 + (i % 2), pose: random_pose(&mut rng) }).collect();
            let mut preds: Vec<_> = gts
                .iter()
                .map(|g| {
                    let mut p = g.pose;
                    p.translation += Vector3::new(rng.random_range(-3.0..3.0), 0.0, rng.random_range(-3.0..3.0));
                    PosePrediction { obj_id: g.obj_id, score: (rng.random_range(0..3) as f64) / 3.0, pose: p }
                })
                .collect();
            let a = match_and_score(&gts, &preds, &models, &MatchConfig::default()).unwrap();
            preds.reverse();
            let b = match_and_score(&gts, &preds, &models, &MatchConfig::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn report_rows_and_json() {
        let rec = PoseErrorRecord {
            obj_id: 1,
            gt_index: 0,
            adds_error: 0.0,
            rotation_error: 0.0,
            translation_error: 0.0,
            diameter: 10.0,
            matched: true,
        };
        let rep = aggregate_report(&[rec], 0, &DEFAULT_FRACTIONS, MetricKind::AddS).unwrap();
        let table = rep.to_table();
        for name in
            ["ADD-S_0p1_avg", "ADD-S_0p2_avg", "ADD-S_0p3_avg", "ADD-S_0p4_avg", "ADD-S_0p5_avg", ROTATION_ROW, TRANSLATION_ROW]
        {
            assert!(table.lines().any(|l| l.starts_with(name)), "{name} missing in\n{table}");
        }
        let j = rep.to_json();
        assert_eq!(j["ADD-S_0p1_avg"], json!(1.0));
        assert_eq!(j["rotation_error_avg"], json!(0.0));
        let keys: Vec<_> = j.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys[0], "ADD-S_0p1_avg");
        assert_eq!(keys[4], "ADD-S_0p5_avg");
    }

    #[test]
    fn empty_report() {
        let rep = aggregate_report(&[], 0, &DEFAULT_FRACTIONS, MetricKind::AddS).unwrap();
        assert_eq!(rep.instance_count, 0);
        assert!(rep.thresholds.iter().all(|t| t.rate == 0.0));
        assert!(aggregate_report(&[], 0, &[0.2, 0.1], MetricKind::AddS).is_err());
    }

    #[test]
    fn injected_rotation_average() {
        let models = models();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gts: Vec<_> = (0..6).map(|_| GtInstance { obj_id: 1, pose: random_pose(&mut rng) }).collect();
        let preds: Vec<_> = gts
            .iter()
            .map(|g| PosePrediction {
                obj_id: 1,
                score: 1.0,
                pose: Pose { rotation: rot_z(10f64.to_radians()) * g.pose.rotation, translation: g.pose.translation },
            })
            .collect();
        // Distinct poses far apart keep the greedy matching one-to-one.
        let recs = match_and_score(&gts, &preds, &models, &MatchConfig::default()).unwrap();
        let rep = aggregate_report(&recs, 0, &DEFAULT_FRACTIONS, MetricKind::AddS).unwrap();
        assert!((rep.rotation_error_avg.unwrap() - 10.0).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn adds_never_exceeds_add(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_cloud(&mut rng, 60);
            let (p, g) = (random_pose(&mut rng), random_pose(&mut rng));
            let idx = NnIndex::build(&pts.transformed(&g)).unwrap();
            prop_assert!(adds_error(&p, &g, &pts, &idx).unwrap() <= add_error(&p, &g, &pts).unwrap() + 1e-12);
        }

        #[test]
        fn add_invariant_under_common_transform(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_cloud(&mut rng, 50);
            let (p, g, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let a = add_error(&p, &g, &pts).unwrap();
            let b = add_error(&c.compose(&p), &c.compose(&g), &pts).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-9));
        }

        #[test]
        fn threshold_sweep_monotone(errs in proptest::collection::vec(0.0f64..80.0, 1..50)) {
            let recs: Vec<_> = errs.iter().enumerate().map(|(i, &e)| PoseErrorRecord {
                obj_id: 1, gt_index: i, adds_error: e, rotation_error: 0.0, translation_error: 0.0, diameter: 100.0, matched: true,
            }).collect();
            let rep = aggregate_report(&recs, 3, &DEFAULT_FRACTIONS, MetricKind::AddS).unwrap();
            prop_assert!(rep.thresholds.windows(2).all(|w| w[0].rate <= w[1].rate));
        }

        #[test]
        fn model_frame_adds_matches_transformed_index(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_cloud(&mut rng, 80);
            let model = ObjectModel::from_points(1, pts.clone(), 40.0).unwrap();
            let (p, g) = (random_pose(&mut rng), random_pose(&mut rng));
            let idx = NnIndex::build(&pts.transformed(&g)).unwrap();
            let a = adds_error(&p, &g, &pts, &idx).unwrap();
            let b = model.adds_error(&p, &g, DistanceMode::Euclidean);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
