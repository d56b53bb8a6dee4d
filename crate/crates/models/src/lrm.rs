use autodiff::{ParamSet, Tape, Tensor, Var};
use field::{FieldDecoder, Triplane, TriplaneVars};

use crate::blocks::{attention_sublayer, embed_tokens, mlp_sublayer, unpatch_head, Leaser};
use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::features::IntermediateFeatures;
use crate::tokens::{image_tokens_raw, PosedImage};

/// Multi-view reconstructor: refines learned shape tokens through
/// `lrm_blocks` of (image cross-attention, self-attention, MLP), each
/// pre-norm with residuals, then projects tokens to triplane texels.
/// Owns the shared field decoder.
pub struct LrmModel {
    pub params: ParamSet,
    pub config: ModelConfig,
}

/// Tape-level outputs of one reconstruction pass.
pub struct ReconstructionVars {
    /// `[shape_tokens, C]` plane texel values.
    pub plane_tokens: Var,
    /// Per-plane `[C,S,S]` vars ready for rendering.
    pub triplane: TriplaneVars,
    /// Block-output vars for the last `lim_blocks` blocks.
    pub feature_vars: Vec<Var>,
    /// Embedded image tokens (for diagnostics/reuse).
    pub image_tokens: Var,
}

impl LrmModel {
    pub fn new(params: ParamSet, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(LrmModel { params, config })
    }

    pub fn decoder(&self) -> Result<FieldDecoder> {
        let dec_params = {
            let mut ps = ParamSet::new();
            for name in field::DECODER_PARAM_NAMES {
                ps.insert(name, self.params.expect(name)?.clone());
            }
            ps
        };
        Ok(FieldDecoder::from_params(dec_params)?)
    }

    /// Records one reconstruction pass on `tape`.
    pub fn reconstruct_on_tape(
        &self,
        tape: &mut Tape,
        views: &[PosedImage],
        trainable: bool,
    ) -> Result<ReconstructionVars> {
        if views.is_empty() {
            return Err(ModelError::Config("reconstruct needs at least one posed view".into()));
        }
        let mut lease = Leaser::new(&self.params, trainable);
        let raw = image_tokens_raw(views, &self.config)?;
        let raw = tape.constant(&raw);
        let img = embed_tokens(tape, &mut lease, raw)?;
        let mut x = lease.get(tape, "shape_tokens")?;
        let first_kept = self.config.lrm_blocks - self.config.lim_blocks;
        let mut feature_vars = Vec::with_capacity(self.config.lim_blocks);
        for b in 0..self.config.lrm_blocks {
            x = attention_sublayer(tape, &mut lease, &format!("block{b:02}/cross_img"), x, img, self.config.heads)?;
            x = attention_sublayer(tape, &mut lease, &format!("block{b:02}/self"), x, x, self.config.heads)?;
            x = mlp_sublayer(tape, &mut lease, &format!("block{b:02}/mlp"), x)?;
            if b >= first_kept {
                feature_vars.push(x);
            }
        }
        let plane_tokens = unpatch_head(tape, &mut lease, x)?;
        let triplane = plane_tokens_to_vars(tape, plane_tokens, &self.config)?;
        Ok(ReconstructionVars { plane_tokens, triplane, feature_vars, image_tokens: img })
    }

    /// Convenience inference: returns the triplane and conditioning features
    /// as plain tensors.
    pub fn reconstruct(
        &self,
        views: &[PosedImage],
        provenance: &str,
    ) -> Result<(Triplane, IntermediateFeatures)> {
        let mut tape = Tape::new();
        let out = self.reconstruct_on_tape(&mut tape, views, false)?;
        let tri = extract_triplane(&tape, &out.triplane, &self.config)?;
        let feats = IntermediateFeatures {
            levels: out.feature_vars.iter().map(|v| tape.to_tensor(*v)).collect(),
            provenance: provenance.to_string(),
        };
        Ok((tri, feats))
    }
}

/// Splits `[3*S*S, C]` plane tokens into three `[C,S,S]` plane vars
/// (token row-major over texels within each plane).
pub fn plane_tokens_to_vars(
    tape: &mut Tape,
    plane_tokens: Var,
    config: &ModelConfig,
) -> Result<TriplaneVars> {
    let s = config.plane_resolution;
    let c = config.plane_channels;
    let per = s * s;
    let mut planes = Vec::with_capacity(3);
    for p in 0..3 {
        let rows = tape.narrow(plane_tokens, 0, p * per, per)?;
        let t = tape.transpose(rows)?;
        planes.push(tape.reshape(t, vec![c, s, s])?);
    }
    Ok(TriplaneVars { planes: [planes[0], planes[1], planes[2]] })
}

pub fn extract_triplane(tape: &Tape, vars: &TriplaneVars, config: &ModelConfig) -> Result<Triplane> {
    let planes = [
        tape.to_tensor(vars.planes[0]),
        tape.to_tensor(vars.planes[1]),
        tape.to_tensor(vars.planes[2]),
    ];
    let _ = config;
    Ok(Triplane::new(planes)?)
}

/// Packs plane tensors back into token layout `[3*S*S, C]` (the inverse of
/// [`plane_tokens_to_vars`]); used to compare or seed token-space values.
pub fn triplane_to_tokens(tri: &Triplane) -> Tensor {
    let s = tri.resolution;
    let c = tri.channels;
    let per = s * s;
    let mut data = vec![0.0; 3 * per * c];
    for (p, plane) in tri.planes.iter().enumerate() {
        let pd = plane.data();
        for texel in 0..per {
            for ch in 0..c {
                data[(p * per + texel) * c + ch] = pd[ch * per + texel];
            }
        }
    }
    Tensor::new(vec![3 * per, c], data).expect("token layout")
}
