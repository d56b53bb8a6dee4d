//! Transformer models over triplanes: a multi-view reconstructor producing
//! a triplane plus intermediate conditioning features, and a feed-forward
//! interpolator predicting the triplane at any continuous time within a
//! keyframe interval. Canonical-coordinate twins reuse the same
//! architectures with coordinate-image inputs.

mod blocks;
pub mod canonical;
mod config;
mod error;
mod features;
mod init;
mod lim;
mod lrm;
mod tokens;

pub use blocks::{attention_sublayer, embed_tokens, mlp_sublayer, unpatch_head, Leaser, LN_EPS};
pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use features::IntermediateFeatures;
pub use init::{init_lim_from_lrm, init_lrm};
pub use lim::{
    causal_loss, interpolation_alpha, pos_encode_alpha, remaining_fraction, triplane_loss,
    CausalLossVars,
    ImageConditioning, InterpolationVars, LimModel,
};
pub use lrm::{
    extract_triplane, plane_tokens_to_vars, triplane_to_tokens, LrmModel, ReconstructionVars,
};
pub use tokens::{image_tokens_raw, PosedImage};
