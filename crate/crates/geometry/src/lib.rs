//! Cameras, rays, Plucker embeddings and depth unprojection shared by the
//! renderer, the tokenizer and mesh tracing. Scene content lives in the
//! unit box `[-1,1]^3`; cameras sit on a radius-2 sphere looking at the
//! origin with near 0.5 and far 4.0.

mod camera;
mod error;
mod rays;
pub mod rig;
mod vec;

pub use camera::Camera;
pub use error::{GeoError, Result};
pub use rays::{make_rays, plucker_embed, unproject_depth, RayBundle};
pub use vec::{Mat3, Vec3};
