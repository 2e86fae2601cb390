//! Synthetic BOP datasets from geometry alone.
//!
//! Objects are dropped onto the plane `z = 0`: each gets a uniform random
//! orientation and a uniform position, and rests where its bounding sphere
//! (centered at the model origin) touches the plane. Overlapping spheres are
//! rejected and resampled. Cameras sit on the upper hemisphere shell around
//! the centroid of the placed objects and look at it. Depth, instance masks
//! and a flat-shaded RGB placeholder are rasterized, and everything is written
//! in the BOP layout. Distractors occlude, but they are never annotated.
//!
//! Each scene draws from its own ChaCha stream (master seed, stream = scene
//! index), so scenes can be generated in parallel and the output does not
//! depend on the thread count.

mod config;
mod generate;
mod placement;
pub mod raster;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{IntrinsicsSpec, LibraryModel, ModelSpec, SceneConfig, SceneSetup};
pub use generate::{generate_dataset, render_view, sample_scene_views, scene_rng, DatasetSummary, RenderedView, SceneSample};
pub use placement::{centroid, sample_cameras, sample_scene, PlacedObject, MAX_CAMERA_ATTEMPTS, MAX_PLACEMENT_ATTEMPTS};
pub use raster::{mask_bbox, rasterize, visibility_fraction, InstanceLayer, RenderInstance, Rendering};

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot parse scene configuration: {0}")]
    ConfigParse(String),
    #[error("cannot load model {path}: {source}")]
    ModelLoad { path: PathBuf, source: crate::mesh::PlyError },
    #[error("unknown built-in shape '{0}' (expected strawberry, sphere, cube or cylinder)")]
    UnknownShape(String),
    #[error("placed {placed} of {total} objects; next one found no free spot in {attempts} attempts")]
    PlacementFailure { placed: usize, total: usize, attempts: usize },
    #[error("no camera kept every object in view within {attempts} attempts")]
    CameraSamplingFailure { attempts: usize },
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Bop(#[from] crate::bop_io::BopError),
}
