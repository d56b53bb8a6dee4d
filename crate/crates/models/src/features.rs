use autodiff::Tensor;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

/// Token sequences captured after each of the reconstructor's last
/// `lim_blocks` transformer blocks (level 0 = earliest of those). The
/// interpolator cross-attends level i in its block i and emits its own
/// levels with identical shapes, which is what allows recurrent reuse.
#[derive(Debug, Clone)]
pub struct IntermediateFeatures {
    pub levels: Vec<Tensor>,
    /// Which model produced these and at which source timestep (diagnostic).
    pub provenance: String,
}

impl IntermediateFeatures {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.levels.len() != config.lim_blocks {
            return Err(ModelError::Config(format!(
                "expected {} feature levels, got {}",
                config.lim_blocks,
                self.levels.len()
            )));
        }
        let want = [config.shape_tokens(), config.width];
        for (i, l) in self.levels.iter().enumerate() {
            if l.shape() != want {
                return Err(ModelError::Config(format!(
                    "feature level {i} has shape {:?}, expected {want:?}",
                    l.shape()
                )));
            }
        }
        Ok(())
    }
}
