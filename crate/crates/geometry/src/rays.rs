use crate::camera::Camera;
use crate::error::{GeoError, Result};
use crate::vec::Vec3;

/// One ray per pixel, row-major over the image.
#[derive(Debug, Clone)]
pub struct RayBundle {
    pub origins: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    pub height: usize,
    pub width: usize,
    pub near: f64,
    pub far: f64,
}

impl RayBundle {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Casts one ray per pixel center through the pinhole model.
pub fn make_rays(camera: &Camera, near: f64, far: f64) -> Result<RayBundle> {
    if !(near > 0.0 && far > near) {
        return Err(GeoError::Config(format!("invalid near/far: {near}/{far}")));
    }
    if camera.focal <= 1e-12 {
        return Err(GeoError::Config("degenerate focal length".into()));
    }
    let mut directions = Vec::with_capacity(camera.height * camera.width);
    for row in 0..camera.height {
        for col in 0..camera.width {
            directions.push(camera.pixel_direction(row, col));
        }
    }
    Ok(RayBundle {
        origins: vec![camera.position; camera.height * camera.width],
        directions,
        height: camera.height,
        width: camera.width,
        near,
        far,
    })
}

/// Per-pixel Plucker coordinates (d, m) with moment m = o x d, flattened
/// as 6 channels per pixel.
pub fn plucker_embed(rays: &RayBundle) -> Vec<[f64; 6]> {
    rays.origins
        .iter()
        .zip(rays.directions.iter())
        .map(|(o, d)| {
            let m = o.cross(*d);
            [d.x, d.y, d.z, m.x, m.y, m.z]
        })
        .collect()
}

/// World points recovered from a per-pixel ray-distance map; pixels with
/// mask 0 yield None.
pub fn unproject_depth(
    camera: &Camera,
    depth: &[f64],
    mask: &[bool],
) -> Result<Vec<Option<Vec3>>> {
    let n = camera.height * camera.width;
    if depth.len() != n || mask.len() != n {
        return Err(GeoError::Data(format!(
            "unproject: expected {n} pixels, got depth {} mask {}",
            depth.len(),
            mask.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let i = row * camera.width + col;
            if !mask[i] {
                out.push(None);
                continue;
            }
            if depth[i] < 0.0 {
                return Err(GeoError::Data(format!(
                    "negative depth {} at masked pixel ({row},{col})",
                    depth[i]
                )));
            }
            let d = camera.pixel_direction(row, col);
            out.push(Some(camera.position + d * depth[i]));
        }
    }
    Ok(out)
}
