//! Sequential vs data-parallel throughput of the batch paths, plus the
//! nearest-neighbor index against a linear scan.
//!
//! "sequential" runs inside a one-thread pool, "parallel" inside a pool with
//! one thread per core. Built without the `parallel` feature both variants
//! run sequentially.

use std::path::Path;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pose_forge::geometry::{axis_angle, Pose};
use pose_forge::mesh::{brute_force_nearest, sample_points, shapes};
use pose_forge::metrics::{
    score_images, DistanceMode, GtInstance, ImageEval, MatchConfig, ModelSet, ObjectModel, PosePrediction,
};
use pose_forge::scenegen::{render_view, sample_scene_views, IntrinsicsSpec, ModelSpec, SceneConfig};

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    [("sequential", one), ("parallel", all)]
}

fn perturb(pose: &Pose, rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let r = axis_angle(&axis, rng.random_range(0.0..0.1)) * pose.rotation;
    let t =
        pose.translation + Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    Pose::new(r, t).unwrap()
}

fn scoring_inputs() -> (Vec<ImageEval>, ModelSet) {
    let mesh = shapes::strawberry(30.0, 36.0, 12, 16);
    let model = ObjectModel::new(1, &mesh, pose_forge::metrics::PointSource::Sampled { count: 2048, seed: 0 }).unwrap();
    let models = ModelSet::from([(1, model)]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let images = (0..64)
        .map(|_| {
            let gts: Vec<GtInstance> = (0..6)
                .map(|_| {
                    let r = axis_angle(&Vector3::new(rng.random(), rng.random(), rng.random()), rng.random_range(0.0..3.0));
                    let t = Vector3::new(
                        rng.random_range(-100.0..100.0),
                        rng.random_range(-80.0..80.0),
                        rng.random_range(400.0..700.0),
                    );
                    GtInstance { obj_id: 1, pose: Pose::new(r, t).unwrap() }
                })
                .collect();
            let preds = gts.iter().map(|g| PosePrediction { obj_id: 1, score: 0.9, pose: perturb(&g.pose, &mut rng) }).collect();
            ImageEval { gts, preds }
        })
        .collect();
    (images, models)
}

fn bench_scoring(c: &mut Criterion) {
    let (images, models) = scoring_inputs();
    let cfg = MatchConfig::default();
    let mut group = c.benchmark_group("score_images_64x6");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| score_images(&images, &models, &cfg).unwrap())));
    }
    group.finish();
}

fn bench_rendering(c: &mut Criterion) {
    let cfg = SceneConfig {
        models: vec![ModelSpec::shape("strawberry", 6)],
        distractors: vec![ModelSpec::shape("cube", 1), ModelSpec::shape("cylinder", 2)],
        plane_mm: 300.0,
        cameras: 4,
        radius_mm: [400.0, 650.0],
        image: [640, 480],
        intrinsics: IntrinsicsSpec { fx: 840.0, fy: 840.0, cx: 319.5, cy: 239.5 },
        seed: 3,
        scenes: 1,
        depth_scale: 0.1,
        split: "train_pbr".into(),
    };
    let setup = cfg.resolve(Path::new(".")).unwrap();
    let sample = sample_scene_views(&setup, 0).unwrap();
    let mut group = c.benchmark_group("render_view_640x480");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| render_view(&setup, &sample, 0))));
    }
    group.finish();
}

fn bench_nearest(c: &mut Criterion) {
    let mesh = shapes::strawberry(30.0, 36.0, 12, 16);
    let points = sample_points(&mesh, 2048, 0).unwrap();
    let model = ObjectModel::from_points(1, points.clone(), 40.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gt = Pose::identity();
    let mut group = c.benchmark_group("adds_2048_points");
    group.bench_function("kd_tree", |b| {
        b.iter_batched(
            || perturb(&gt, &mut rng),
            |pred| model.adds_error(&pred, &gt, DistanceMode::Euclidean),
            BatchSize::SmallInput,
        )
    });
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    group.bench_function("linear_scan", |b| {
        b.iter_batched(
            || perturb(&gt, &mut rng),
            |pred| {
                let sum: f64 = points
                    .points()
                    .iter()
                    .map(|x| brute_force_nearest(points.points(), &pred.transform_point(x)).unwrap().distance)
                    .sum();
                sum / points.len() as f64
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_scoring, bench_rendering, bench_nearest);
criterion_main!(benches);
