use geometry::{Camera, Vec3};

use crate::error::Result;
use crate::scene::SceneSpec;

/// Field query at one world point and (fractional) keyframe time:
/// signed distance of the deformed union, owning primitive's albedo, and the
/// canonical coordinate (the material point's position at k = 1).
pub struct SceneSample {
    pub sdf: f64,
    pub color: [f64; 3],
    pub canonical: Vec3,
    pub owner: usize,
}

/// Conservative SDF of the union at time `k`: each primitive is evaluated in
/// its rest frame through the inverse deformation; non-rigid pieces scale the
/// distance by their smallest stretch factor so sphere tracing stays safe.
pub fn evaluate_scene(spec: &SceneSpec, k: f64, p: Vec3) -> Result<SceneSample> {
    spec.check_k(k)?;
    let phase = spec.phase(k);
    let mut best = f64::INFINITY;
    let mut owner = 0usize;
    for (i, item) in spec.items.iter().enumerate() {
        let rest = item.deformation.invert(p, phase);
        let d = item.primitive.sdf(rest) * item.deformation.min_scale(phase);
        if d < best {
            best = d;
            owner = i;
        }
    }
    let item = &spec.items[owner];
    let rest = item.deformation.invert(p, phase);
    Ok(SceneSample { sdf: best, color: item.color, canonical: rest, owner })
}

/// SDF-only query (hot path of the sphere tracer).
pub fn scene_sdf(spec: &SceneSpec, phase: f64, p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for item in &spec.items {
        let rest = item.deformation.invert(p, phase);
        let d = item.primitive.sdf(rest) * item.deformation.min_scale(phase);
        if d < best {
            best = d;
        }
    }
    best
}

pub const TRACE_MAX_STEPS: usize = 128;
pub const TRACE_TOL: f64 = 1e-5;

/// Sphere-traces one ray; returns the hit distance if the surface is reached
/// before `far`.
pub fn trace_ray(spec: &SceneSpec, phase: f64, origin: Vec3, dir: Vec3, near: f64, far: f64) -> Option<f64> {
    let mut t = near;
    for _ in 0..TRACE_MAX_STEPS {
        let p = origin + dir * t;
        let d = scene_sdf(spec, phase, p);
        if d < TRACE_TOL {
            return Some(t);
        }
        t += d;
        if t > far {
            return None;
        }
    }
    None
}

/// Central-difference surface normal.
pub fn scene_normal(spec: &SceneSpec, phase: f64, p: Vec3) -> Vec3 {
    let e = 1e-5;
    let dx = scene_sdf(spec, phase, p + Vec3::new(e, 0.0, 0.0))
        - scene_sdf(spec, phase, p - Vec3::new(e, 0.0, 0.0));
    let dy = scene_sdf(spec, phase, p + Vec3::new(0.0, e, 0.0))
        - scene_sdf(spec, phase, p - Vec3::new(0.0, e, 0.0));
    let dz = scene_sdf(spec, phase, p + Vec3::new(0.0, 0.0, e))
        - scene_sdf(spec, phase, p - Vec3::new(0.0, 0.0, e));
    Vec3::new(dx, dy, dz).normalized()
}

const LIGHT_DIR: Vec3 = Vec3 { x: 0.455, y: 0.759, z: 0.455 };
const AMBIENT: f64 = 0.25;

/// Ground-truth maps for one (scene, time, camera) triple. Row-major pixel
/// order; canonical entries are valid exactly where mask is set.
pub struct GtImages {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub canonical: Vec<[f64; 3]>,
    pub height: usize,
    pub width: usize,
}

/// Renders RGB (flat albedo with Lambertian shading from a fixed light),
/// ray-distance depth, alpha mask and canonical-coordinate maps by sphere
/// tracing the scene SDF.
pub fn render_ground_truth(
    spec: &SceneSpec,
    k: f64,
    camera: &Camera,
    near: f64,
    far: f64,
) -> Result<GtImages> {
    spec.check_k(k)?;
    let phase = spec.phase(k);
    let light = LIGHT_DIR.normalized();
    let n = camera.height * camera.width;
    let mut out = GtImages {
        rgb: vec![[0.0; 3]; n],
        depth: vec![0.0; n],
        mask: vec![false; n],
        canonical: vec![[0.0; 3]; n],
        height: camera.height,
        width: camera.width,
    };
    for row in 0..camera.height {
        for col in 0..camera.width {
            let i = row * camera.width + col;
            let dir = camera.pixel_direction(row, col);
            let Some(t) = trace_ray(spec, phase, camera.position, dir, near, far) else {
                continue;
            };
            let p = camera.position + dir * t;
            let sample = evaluate_scene(spec, k, p)?;
            let normal = scene_normal(spec, phase, p);
            let lambert = AMBIENT + (1.0 - AMBIENT) * normal.dot(light).max(0.0);
            out.rgb[i] = [
                sample.color[0] * lambert,
                sample.color[1] * lambert,
                sample.color[2] * lambert,
            ];
            out.depth[i] = t;
            out.mask[i] = true;
            out.canonical[i] = sample.canonical.to_array();
        }
    }
    Ok(out)
}
