use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Shared transformer dimensions. The reconstructor has `lrm_blocks`, the
/// interpolator `lim_blocks`; the last `lim_blocks` reconstructor outputs
/// are the conditioning feature levels, aligned one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token width d.
    pub width: usize,
    pub heads: usize,
    pub lrm_blocks: usize,
    pub lim_blocks: usize,
    /// Square patch edge in pixels.
    pub patch: usize,
    /// Square input image edge in pixels.
    pub image_size: usize,
    /// Triplane channel count C.
    pub plane_channels: usize,
    /// Triplane resolution S (one shape token per texel).
    pub plane_resolution: usize,
    /// Half-dimension of the interpolation-time encoding.
    pub alpha_dim: usize,
    /// MLP hidden width multiplier.
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 64,
            heads: 4,
            lrm_blocks: 12,
            lim_blocks: 6,
            patch: 8,
            image_size: 32,
            plane_channels: 16,
            plane_resolution: 16,
            alpha_dim: 32,
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.image_size % self.patch != 0 {
            return Err(ModelError::Config(format!(
                "image size {} not divisible by patch {}",
                self.image_size, self.patch
            )));
        }
        if self.lim_blocks > self.lrm_blocks {
            return Err(ModelError::Config(
                "interpolator cannot have more blocks than the reconstructor".into(),
            ));
        }
        Ok(())
    }

    /// Tokens per view after patchifying.
    pub fn tokens_per_view(&self) -> usize {
        let g = self.image_size / self.patch;
        g * g
    }

    /// RGB (3) + Plucker (6) channels per pixel.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 9
    }

    /// Shape-token count: one token per triplane texel over three planes.
    pub fn shape_tokens(&self) -> usize {
        3 * self.plane_resolution * self.plane_resolution
    }

    pub fn mlp_hidden(&self) -> usize {
        self.width * self.mlp_ratio
    }
}
