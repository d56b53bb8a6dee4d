use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::vec::{Mat3, Vec3};

/// Pinhole camera. `rotation` maps camera-frame directions to world
/// directions (world-from-camera); camera axes are x-right, y-down,
/// z-forward. Pixel (row, col) is sampled at its center (col+0.5, row+0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub rotation: Mat3,
    pub position: Vec3,
    pub focal: f64,
    pub principal: (f64, f64),
    pub height: usize,
    pub width: usize,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    rotation: [f64; 9],
    position: [f64; 3],
    focal: f64,
    principal_point: [f64; 2],
    height: usize,
    width: usize,
}

impl Camera {
    pub fn new(
        rotation: Mat3,
        position: Vec3,
        focal: f64,
        principal: (f64, f64),
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if focal <= 0.0 {
            return Err(GeoError::Config(format!("focal must be positive, got {focal}")));
        }
        let defect = rotation.orthonormality_defect();
        if defect > 1e-9 {
            return Err(GeoError::Config(format!(
                "rotation not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Camera { rotation, position, focal, principal, height, width })
    }

    /// Camera at `position` looking at `target`, world up +Y (falls back to
    /// +X when the view direction is vertical).
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        focal: f64,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let forward = (target - position).normalized();
        let mut up = Vec3::new(0.0, 1.0, 0.0);
        if forward.cross(up).norm() < 1e-6 {
            up = Vec3::new(1.0, 0.0, 0.0);
        }
        let right = forward.cross(up).normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_cols(right, down, forward);
        Camera::new(rotation, position, focal, (width as f64 / 2.0, height as f64 / 2.0), height, width)
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.col(2)
    }

    /// Projects a world point to (x: col px, y: row px, ray distance).
    /// Returns None behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let pc = self.rotation.tr_mul_vec(p - self.position);
        if pc.z <= 0.0 {
            return None;
        }
        let x = self.focal * pc.x / pc.z + self.principal.0;
        let y = self.focal * pc.y / pc.z + self.principal.1;
        Some((x, y, pc.norm()))
    }

    /// World-space unit ray direction through pixel (row, col) center.
    pub fn pixel_direction(&self, row: usize, col: usize) -> Vec3 {
        self.direction_at(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// World-space unit direction through continuous image coords (x, y).
    pub fn direction_at(&self, x: f64, y: f64) -> Vec3 {
        let d = Vec3::new(
            (x - self.principal.0) / self.focal,
            (y - self.principal.1) / self.focal,
            1.0,
        );
        self.rotation.mul_vec(d).normalized()
    }

    pub fn to_json(&self) -> String {
        let j = CameraJson {
            rotation: self.rotation.m,
            position: self.position.to_array(),
            focal: self.focal,
            principal_point: [self.principal.0, self.principal.1],
            height: self.height,
            width: self.width,
        };
        serde_json::to_string_pretty(&j).expect("camera serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: CameraJson =
            serde_json::from_str(s).map_err(|e| GeoError::Config(format!("camera json: {e}")))?;
        Camera::new(
            Mat3 { m: j.rotation },
            Vec3::from_array(j.position),
            j.focal,
            (j.principal_point[0], j.principal_point[1]),
            j.height,
            j.width,
        )
    }
}
