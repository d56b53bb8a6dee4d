//! Procedural animated-scene generator: analytic SDF shapes with known
//! invertible deformations, sphere-traced to posed RGB / depth / mask /
//! canonical-coordinate observations with exact correspondences.

mod dataset;
mod error;
pub mod io;
pub mod rng;
mod sample_scenes;
mod scene;
mod sdf;

pub use dataset::{
    generate_dataset, scene_id, Dataset, DatasetConfig, Observation, SceneManifest,
};
pub use error::{Result, SynthError};
pub use sample_scenes::sample_scene;
pub use scene::{Deformation, Primitive, SceneItem, SceneSpec};
pub use sdf::{
    evaluate_scene, render_ground_truth, scene_normal, scene_sdf, trace_ray, GtImages,
    SceneSample, TRACE_MAX_STEPS, TRACE_TOL,
};
