use geometry::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};

/// Base shapes, defined at the first keyframe (the rest pose).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    RoundedBox { center: [f64; 3], half: [f64; 3], round: f64 },
}

impl Primitive {
    /// Exact signed distance in the rest pose.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - Vec3::from_array(*center)).norm() - radius,
            Primitive::Capsule { a, b, radius } => {
                let a = Vec3::from_array(*a);
                let b = Vec3::from_array(*b);
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm() - radius
            }
            Primitive::RoundedBox { center, half, round } => {
                let q = (p - Vec3::from_array(*center)).abs() - Vec3::from_array(*half);
                let outside = q.max(Vec3::ZERO).norm();
                let inside = q.max_component().min(0.0);
                outside + inside - round
            }
        }
    }

    /// Loose bounding radius about the origin in the rest pose.
    pub fn bound(&self) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => Vec3::from_array(*center).norm() + radius,
            Primitive::Capsule { a, b, radius } => {
                Vec3::from_array(*a).norm().max(Vec3::from_array(*b).norm()) + radius
            }
            Primitive::RoundedBox { center, half, round } => {
                Vec3::from_array(*center).norm() + Vec3::from_array(*half).norm() + round
            }
        }
    }
}

/// Per-primitive motion, parameterized by phase in [0,1] over the sequence;
/// every variant is the identity at phase 0 and invertible at any phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Deformation {
    Static,
    /// Rotation about `axis` through `pivot`, angle = `total_angle * phase`.
    Rotate { axis: [f64; 3], pivot: [f64; 3], total_angle: f64 },
    /// Linear drift plus a sine sweep along `amp`.
    Translate { lin: [f64; 3], amp: [f64; 3], freq: f64 },
    /// Hinge articulation: rotation about `axis` anchored at `hinge`,
    /// angle = `total_angle * sin(pi * phase)` (swings out and back).
    Hinge { axis: [f64; 3], hinge: [f64; 3], total_angle: f64 },
    /// Periodic nonuniform scaling about `center`.
    Scale { center: [f64; 3], amp: [f64; 3], freq: f64 },
}

impl Deformation {
    /// Maps a rest point (position at phase 0) to its position at `phase`.
    pub fn apply(&self, q: Vec3, phase: f64) -> Vec3 {
        match self {
            Deformation::Static => q,
            Deformation::Rotate { axis, pivot, total_angle } => {
                let r = Mat3::rotation(Vec3::from_array(*axis), total_angle * phase);
                let c = Vec3::from_array(*pivot);
                r.mul_vec(q - c) + c
            }
            Deformation::Translate { lin, amp, freq } => {
                q + Self::translate_offset(*lin, *amp, *freq, phase)
            }
            Deformation::Hinge { axis, hinge, total_angle } => {
                let ang = total_angle * (std::f64::consts::PI * phase).sin();
                let r = Mat3::rotation(Vec3::from_array(*axis), ang);
                let h = Vec3::from_array(*hinge);
                r.mul_vec(q - h) + h
            }
            Deformation::Scale { center, amp, freq } => {
                let s = Self::scale_factors(*amp, *freq, phase);
                let c = Vec3::from_array(*center);
                let d = q - c;
                c + Vec3::new(d.x * s.x, d.y * s.y, d.z * s.z)
            }
        }
    }

    /// Inverse map: world position at `phase` back to the rest point.
    pub fn invert(&self, p: Vec3, phase: f64) -> Vec3 {
        match self {
            Deformation::Static => p,
            Deformation::Rotate { axis, pivot, total_angle } => {
                let r = Mat3::rotation(Vec3::from_array(*axis), -(total_angle * phase));
                let c = Vec3::from_array(*pivot);
                r.mul_vec(p - c) + c
            }
            Deformation::Translate { lin, amp, freq } => {
                p - Self::translate_offset(*lin, *amp, *freq, phase)
            }
            Deformation::Hinge { axis, hinge, total_angle } => {
                let ang = total_angle * (std::f64::consts::PI * phase).sin();
                let r = Mat3::rotation(Vec3::from_array(*axis), -ang);
                let h = Vec3::from_array(*hinge);
                r.mul_vec(p - h) + h
            }
            Deformation::Scale { center, amp, freq } => {
                let s = Self::scale_factors(*amp, *freq, phase);
                let c = Vec3::from_array(*center);
                let d = p - c;
                c + Vec3::new(d.x / s.x, d.y / s.y, d.z / s.z)
            }
        }
    }

    fn translate_offset(lin: [f64; 3], amp: [f64; 3], freq: f64, phase: f64) -> Vec3 {
        let sweep = (2.0 * std::f64::consts::PI * freq * phase).sin();
        Vec3::from_array(lin) * phase + Vec3::from_array(amp) * sweep
    }

    fn scale_factors(amp: [f64; 3], freq: f64, phase: f64) -> Vec3 {
        let w = (2.0 * std::f64::consts::PI * freq * phase).sin();
        Vec3::new(1.0 + amp[0] * w, 1.0 + amp[1] * w, 1.0 + amp[2] * w)
    }

    /// Smallest scale factor at `phase`; 1 for rigid motions. Used as a
    /// conservative multiplier on rest-pose distances.
    pub fn min_scale(&self, phase: f64) -> f64 {
        match self {
            Deformation::Scale { amp, freq, .. } => {
                let s = Self::scale_factors(*amp, *freq, phase);
                s.x.min(s.y).min(s.z).max(1e-3)
            }
            _ => 1.0,
        }
    }
}

/// One shape in a scene: rest geometry + motion + flat albedo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneItem {
    pub primitive: Primitive,
    pub deformation: Deformation,
    pub color: [f64; 3],
}

/// A full animated scene: primitives with per-primitive motion and the
/// keyframe count. Shapes must stay inside [-0.9, 0.9]^3 at all keyframes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub items: Vec<SceneItem>,
    pub n_keyframes: usize,
}

impl SceneSpec {
    /// Phase in [0,1] for a (possibly fractional) keyframe index in
    /// [1, n_keyframes].
    pub fn phase(&self, k: f64) -> f64 {
        if self.n_keyframes <= 1 {
            0.0
        } else {
            (k - 1.0) / (self.n_keyframes as f64 - 1.0)
        }
    }

    pub fn check_k(&self, k: f64) -> Result<()> {
        if k < 1.0 || k > self.n_keyframes as f64 {
            return Err(SynthError::Domain(format!(
                "timestep {k} outside [1, {}]",
                self.n_keyframes
            )));
        }
        Ok(())
    }
}
