//! Tooling around a single-shot 6D pose estimator.
//!
//! - [`geometry`]: 6D rotation representation, pinhole camera, decoupled translation.
//! - [`mesh`]: PLY models, surface sampling, diameters, nearest-neighbor index.
//! - [`metrics`]: ADD / ADD-S, rotation and translation errors, report aggregation.
//! - [`losses`]: reference training losses and a finite-difference gradient checker.
//! - [`bop_io`]: BOP scene and results-file I/O plus dataset validation.
//! - [`augment`]: geometric augmentation applied jointly to images and poses, color jitter.
//! - [`scenegen`]: synthetic scenes, cameras, z-buffer rendering, BOP dataset export.
//! - [`postprocess`]: decoding network outputs, NMS, timed evaluation.
//!
//! Lengths are millimetres, angles in public reports are degrees.

// Guards are written `!(x > 0.0)` on purpose: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod bop_io;
pub mod geometry;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod postprocess;
pub mod scenegen;
