//! Canonical-coordinate support: the canonical twins of the reconstructor
//! and interpolator are the same architectures fed with coordinate images
//! (and, for the interpolator, source+target RGB conditioning); this module
//! holds the glue that bootstraps canonical coordinate renders from a
//! trained RGB triplane.

use field::{render_image, FieldDecoder, RenderOutput, Triplane};
use geometry::{unproject_depth, Camera};

use crate::error::{ModelError, Result};

/// Alpha level at which a rendered pixel counts as surface when
/// bootstrapping canonical maps.
pub const BOOTSTRAP_ALPHA: f64 = 0.5;

/// A canonical-coordinate image: world positions at the source timestep per
/// valid pixel, zero elsewhere.
#[derive(Debug, Clone)]
pub struct CanonicalRender {
    pub values: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
    pub height: usize,
    pub width: usize,
}

impl CanonicalRender {
    /// Pixel triples with invalid pixels zeroed, ready for tokenization.
    pub fn pixels(&self) -> Vec<[f64; 3]> {
        self.values.clone()
    }
}

/// Converts one rendered view (depth + alpha) into a canonical image: at the
/// source timestep canonical coordinates equal world coordinates, so masked
/// unprojected depth is exactly the canonical render.
pub fn canonical_from_render(camera: &Camera, render: &RenderOutput) -> Result<CanonicalRender> {
    let mask: Vec<bool> = render.alpha.iter().map(|&a| a >= BOOTSTRAP_ALPHA).collect();
    let pts = unproject_depth(camera, &render.depth, &mask)?;
    let mut values = vec![[0.0; 3]; pts.len()];
    for (i, p) in pts.iter().enumerate() {
        if let Some(p) = p {
            values[i] = p.to_array();
        }
    }
    Ok(CanonicalRender { values, valid: mask, height: render.height, width: render.width })
}

/// Renders the source-timestep RGB triplane from every camera and unprojects
/// the depth into canonical-coordinate images. Errors when no camera sees
/// any surface.
pub fn bootstrap_canonical_renders(
    tri: &Triplane,
    dec: &FieldDecoder,
    cameras: &[Camera],
    near: f64,
    far: f64,
    n_samples: usize,
) -> Result<Vec<CanonicalRender>> {
    let mut out = Vec::with_capacity(cameras.len());
    let mut any_valid = false;
    for cam in cameras {
        let render = render_image(tri, dec, cam, near, far, n_samples)?;
        let cr = canonical_from_render(cam, &render)?;
        any_valid |= cr.valid.iter().any(|&v| v);
        out.push(cr);
    }
    if !any_valid {
        return Err(ModelError::Domain(
            "bootstrap found no surface: alpha below threshold everywhere".into(),
        ));
    }
    Ok(out)
}
