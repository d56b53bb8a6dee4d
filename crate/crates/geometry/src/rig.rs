use crate::camera::Camera;
use crate::error::Result;
use crate::vec::Vec3;

/// Scene camera convention: rig sphere radius, ray near/far and the focal
/// scale used by the synthetic generator and by evaluation.
pub const RIG_RADIUS: f64 = 2.0;
pub const NEAR: f64 = 0.5;
pub const FAR: f64 = 4.0;

/// Focal length in pixels for a given image width; the unit box projects to
/// roughly 70% of the image height from the rig distance.
pub fn default_focal(width: usize) -> f64 {
    0.8 * width as f64
}

/// Cameras on a sphere of radius [`RIG_RADIUS`] looking at the origin.
/// Directions come from a deterministic stream of (cos theta, phi) pairs;
/// `samples` holds one `(u, v)` in `[0,1]^2` per camera.
pub fn rig_from_samples(samples: &[(f64, f64)], height: usize, width: usize) -> Result<Vec<Camera>> {
    let mut cams = Vec::with_capacity(samples.len());
    for &(u, v) in samples {
        // cos(theta) uniform in [-0.6, 0.6] keeps cameras away from the
        // world-up poles where the look-at frame degenerates.
        let ct = -0.6 + 1.2 * u;
        let st = (1.0 - ct * ct).sqrt();
        let phi = 2.0 * std::f64::consts::PI * v;
        let pos = Vec3::new(st * phi.cos(), ct, st * phi.sin()) * RIG_RADIUS;
        cams.push(Camera::look_at(pos, Vec3::ZERO, default_focal(width), height, width)?);
    }
    Ok(cams)
}
