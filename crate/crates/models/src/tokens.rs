use autodiff::Tensor;
use geometry::rig::{FAR, NEAR};
use geometry::Camera;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

/// One posed input view: row-major pixel triples plus its camera.
pub struct PosedImage<'a> {
    pub pixels: &'a [[f64; 3]],
    pub camera: &'a Camera,
}

/// Patchified raw tokens for a set of posed views: each pixel carries its 3
/// image channels concatenated with the 6 Plucker ray coordinates, and each
/// P x P patch flattens row-major with channels last. Output shape
/// `[n_views * tokens_per_view, patch_dim]`; provenance is implicit in row
/// order (view-major, then patch row-major).
pub fn image_tokens_raw(views: &[PosedImage], config: &ModelConfig) -> Result<Tensor> {
    let hw = config.image_size;
    let p = config.patch;
    let grid = hw / p;
    let tpv = config.tokens_per_view();
    let pdim = config.patch_dim();
    let mut data = vec![0.0; views.len() * tpv * pdim];
    for (vi, view) in views.iter().enumerate() {
        if view.camera.height != hw || view.camera.width != hw {
            return Err(ModelError::Config(format!(
                "camera image size {}x{} does not match config {hw}",
                view.camera.height, view.camera.width
            )));
        }
        if view.pixels.len() != hw * hw {
            return Err(ModelError::Config(format!(
                "view has {} pixels, expected {}",
                view.pixels.len(),
                hw * hw
            )));
        }
        let rays = geometry::make_rays(view.camera, NEAR, FAR)?;
        let plucker = geometry::plucker_embed(&rays);
        for ty in 0..grid {
            for tx in 0..grid {
                let token = vi * tpv + ty * grid + tx;
                for py in 0..p {
                    for px in 0..p {
                        let row = ty * p + py;
                        let col = tx * p + px;
                        let pix = row * hw + col;
                        let base = token * pdim + (py * p + px) * 9;
                        data[base] = view.pixels[pix][0];
                        data[base + 1] = view.pixels[pix][1];
                        data[base + 2] = view.pixels[pix][2];
                        data[base + 3..base + 9].copy_from_slice(&plucker[pix]);
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![views.len() * tpv, pdim], data).expect("token layout"))
}
