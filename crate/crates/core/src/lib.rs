//! Semantic signed-distance reconstruction of buildings and estimation of
//! envelope characteristics (window-to-wall ratio, footprint).
//!
//! The crate is organised as a pipeline:
//!
//! * [`scene`] builds procedural buildings as analytic semantic SDFs with
//!   closed-form ground truth.
//! * [`camera`] provides the pinhole model and valid-pose sampling.
//! * [`render`] holds the exact sphere tracer and the SDF volume renderer.
//! * [`neural`] and [`train`] fit a semantic SDF network to rendered views.
//! * [`characteristics`] extracts a semantic mesh and measures WWR and footprint.
//! * [`baseline2d`] implements the image-space WWR baselines.
//! * [`dataset`], [`io`] and [`cli`] tie everything together on disk.

pub mod baseline2d;
pub mod camera;
pub mod characteristics;
pub mod cli;
pub mod dataset;
pub mod fixtures;
pub mod io;
mod mc_tables;
pub mod neural;
pub mod render;
pub mod rng;
pub mod scene;
pub mod train;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use scene::SemanticClass;
