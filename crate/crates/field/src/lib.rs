//! The triplane implicit representation and its differentiable
//! emission-absorption renderer.

mod render;
pub mod synthetic;
mod triplane;

pub use render::{
    render_image, render_rays, stratified_jitter, RaySampling, RenderOutput, RenderVars,
    ALPHA_EPS, N_SAMPLES_EVAL, N_SAMPLES_TRAIN,
};
pub use triplane::{
    decode_raw, eval_points, sample_points, DecoderVars, FieldDecoder, FieldError, PointSamples,
    Result, Triplane, TriplaneVars, DECODER_HIDDEN, DECODER_OUT, DECODER_PARAM_NAMES,
};
