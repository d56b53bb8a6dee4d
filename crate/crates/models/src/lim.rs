use autodiff::{ParamSet, Tape, Var};
use field::TriplaneVars;

use crate::blocks::{attention_sublayer, embed_tokens, mlp_sublayer, unpatch_head, Leaser};
use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::features::IntermediateFeatures;
use crate::lrm::plane_tokens_to_vars;
use crate::tokens::{image_tokens_raw, PosedImage};

/// Sinusoidal encoding of the interpolation time: slot 2i carries
/// cos(alpha * f_{2i}), slot 2i+1 carries sin(alpha * f_{2i+1}), with
/// f_j = exp(-(ln 10000 / d_half) * j) over slot index j.
pub fn pos_encode_alpha(alpha: f64, d_half: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::Domain(format!("alpha {alpha} outside [0,1]")));
    }
    if d_half < 1 {
        return Err(ModelError::Config("alpha encoding needs d_half >= 1".into()));
    }
    let rate = (10000.0f64).ln() / d_half as f64;
    let freq = |j: usize| (-rate * j as f64).exp();
    let mut out = Vec::with_capacity(2 * d_half);
    for i in 0..d_half {
        out.push((alpha * freq(2 * i)).cos());
        out.push((alpha * freq(2 * i + 1)).sin());
    }
    Ok(out)
}

/// Whether the interpolator's image cross-attention sees only the target
/// keyframe (rgb variant) or source and target frames with a keyframe-id
/// embedding (canonical variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageConditioning {
    TargetOnly,
    SourceAndTarget,
}

/// Feed-forward triplane interpolator. Input tokens are conditioning
/// feature level 0 with the encoded time concatenated per token; each block
/// cross-attends its own feature level, then the image tokens, then itself.
pub struct LimModel {
    pub params: ParamSet,
    pub config: ModelConfig,
    pub conditioning: ImageConditioning,
}

pub struct InterpolationVars {
    /// `[shape_tokens, C]`
    pub plane_tokens: Var,
    pub triplane: TriplaneVars,
    /// The interpolator's own block outputs (recurrence contract: same
    /// shapes as the reconstructor features).
    pub feature_vars: Vec<Var>,
}

impl LimModel {
    pub fn new(params: ParamSet, config: ModelConfig, conditioning: ImageConditioning) -> Result<Self> {
        config.validate()?;
        Ok(LimModel { params, config, conditioning })
    }

    /// Embeds target (and for the canonical variant, source) posed images
    /// into cross-attention tokens on the tape.
    pub fn image_tokens_on_tape(
        &self,
        tape: &mut Tape,
        source_views: Option<&[PosedImage]>,
        target_views: &[PosedImage],
        trainable: bool,
    ) -> Result<Var> {
        let mut lease = Leaser::new(&self.params, trainable);
        match self.conditioning {
            ImageConditioning::TargetOnly => {
                if source_views.is_some() {
                    return Err(ModelError::Config(
                        "rgb interpolator conditions on target frames only".into(),
                    ));
                }
                let raw = image_tokens_raw(target_views, &self.config)?;
                let raw = tape.constant(&raw);
                embed_tokens(tape, &mut lease, raw)
            }
            ImageConditioning::SourceAndTarget => {
                let src = source_views.ok_or_else(|| {
                    ModelError::Config("canonical interpolator needs source frames".into())
                })?;
                let raw_src = image_tokens_raw(src, &self.config)?;
                let raw_tgt = image_tokens_raw(target_views, &self.config)?;
                let raw_src = tape.constant(&raw_src);
                let raw_tgt = tape.constant(&raw_tgt);
                let emb_src = embed_tokens(tape, &mut lease, raw_src)?;
                let emb_tgt = embed_tokens(tape, &mut lease, raw_tgt)?;
                let kf = lease.get(tape, "keyframe_emb")?;
                let kf_src = tape.narrow(kf, 0, 0, 1)?;
                let kf_tgt = tape.narrow(kf, 0, 1, 1)?;
                let emb_src = tape.add_row(emb_src, kf_src)?;
                let emb_tgt = tape.add_row(emb_tgt, kf_tgt)?;
                Ok(tape.concat(0, &[emb_src, emb_tgt])?)
            }
        }
    }

    /// One interpolation pass. `features` are the conditioning levels
    /// (reconstructor outputs, or this model's own previous outputs for
    /// recurrent use); `image_tokens` from [`Self::image_tokens_on_tape`].
    pub fn interpolate_on_tape(
        &self,
        tape: &mut Tape,
        features: &[Var],
        image_tokens: Var,
        alpha: f64,
        trainable: bool,
    ) -> Result<InterpolationVars> {
        if features.len() != self.config.lim_blocks {
            return Err(ModelError::Config(format!(
                "expected {} conditioning levels, got {}",
                self.config.lim_blocks,
                features.len()
            )));
        }
        let t_shape = self.config.shape_tokens();
        for f in features {
            if tape.shape(*f) != [t_shape, self.config.width] {
                return Err(ModelError::Config(format!(
                    "conditioning level shape {:?} != [{t_shape}, {}]",
                    tape.shape(*f),
                    self.config.width
                )));
            }
        }
        let mut lease = Leaser::new(&self.params, trainable);
        let phi = pos_encode_alpha(alpha, self.config.alpha_dim)?;
        let mut phi_rows = Vec::with_capacity(t_shape * phi.len());
        for _ in 0..t_shape {
            phi_rows.extend_from_slice(&phi);
        }
        let phi = tape.constant_from(vec![t_shape, 2 * self.config.alpha_dim], phi_rows);
        let joined = tape.concat(1, &[features[0], phi])?;
        let w_in = lease.get(tape, "alpha_proj/w")?;
        let b_in = lease.get(tape, "alpha_proj/b")?;
        let mut x = tape.matmul(joined, w_in)?;
        x = tape.add_row(x, b_in)?;

        let mut feature_vars = Vec::with_capacity(self.config.lim_blocks);
        for b in 0..self.config.lim_blocks {
            x = attention_sublayer(
                tape,
                &mut lease,
                &format!("block{b:02}/cross_feat"),
                x,
                features[b],
                self.config.heads,
            )?;
            x = attention_sublayer(
                tape,
                &mut lease,
                &format!("block{b:02}/cross_img"),
                x,
                image_tokens,
                self.config.heads,
            )?;
            x = attention_sublayer(tape, &mut lease, &format!("block{b:02}/self"), x, x, self.config.heads)?;
            x = mlp_sublayer(tape, &mut lease, &format!("block{b:02}/mlp"), x)?;
            feature_vars.push(x);
        }
        let plane_tokens = unpatch_head(tape, &mut lease, x)?;
        let triplane = plane_tokens_to_vars(tape, plane_tokens, &self.config)?;
        Ok(InterpolationVars { plane_tokens, triplane, feature_vars })
    }

    /// Convenience inference from plain feature tensors; returns the
    /// interpolated plane tokens and this pass's own features.
    pub fn interpolate(
        &self,
        features: &IntermediateFeatures,
        source_views: Option<&[PosedImage]>,
        target_views: &[PosedImage],
        alpha: f64,
    ) -> Result<(field::Triplane, IntermediateFeatures)> {
        features.validate(&self.config)?;
        let mut tape = Tape::new();
        let fvars: Vec<Var> = features.levels.iter().map(|t| tape.constant(t)).collect();
        let img = self.image_tokens_on_tape(&mut tape, source_views, target_views, false)?;
        let out = self.interpolate_on_tape(&mut tape, &fvars, img, alpha, false)?;
        let tri = crate::lrm::extract_triplane(&tape, &out.triplane, &self.config)?;
        let feats = IntermediateFeatures {
            levels: out.feature_vars.iter().map(|v| tape.to_tensor(*v)).collect(),
            provenance: format!("{}+alpha", features.provenance),
        };
        Ok((tri, feats))
    }
}

/// Mean squared error between predicted and target plane-token tensors
/// (identical to triplane MSE; the unpatch mapping is a permutation).
pub fn triplane_loss(tape: &mut Tape, predicted: Var, target: Var) -> Result<Var> {
    Ok(tape.mse(predicted, target)?)
}

/// Continuous interpolation time for a middle keyframe within the pair
/// (k_src, k_tgt): (k_m - k_src) / (k_tgt - k_src).
pub fn interpolation_alpha(k_src: usize, k_m: usize, k_tgt: usize) -> Result<f64> {
    if !(k_src <= k_m && k_m <= k_tgt && k_src < k_tgt) {
        return Err(ModelError::Domain(format!(
            "keyframes must satisfy k_src <= k_m <= k_tgt, got ({k_src}, {k_m}, {k_tgt})"
        )));
    }
    Ok((k_m - k_src) as f64 / (k_tgt - k_src) as f64)
}

/// Remaining interpolation fraction after a stop at `alpha_rand` on the way
/// to `delta` (both measured in the source interval).
pub fn remaining_fraction(delta: f64, alpha_rand: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) || alpha_rand < 0.0 {
        return Err(ModelError::Domain(format!("delta {delta} / alpha_rand {alpha_rand}")));
    }
    if alpha_rand > delta {
        return Err(ModelError::Domain(format!(
            "alpha_rand {alpha_rand} exceeds delta {delta}"
        )));
    }
    if alpha_rand >= 1.0 {
        return Err(ModelError::Domain("alpha_rand must be < 1".into()));
    }
    Ok((delta - alpha_rand) / (1.0 - alpha_rand))
}

pub struct CausalLossVars {
    pub loss: Var,
    /// Triplane reached via the intermediate stop.
    pub two_hop: InterpolationVars,
    /// Direct interpolation to `delta`.
    pub direct: InterpolationVars,
}

/// Consistency penalty: interpolating to `alpha_rand`, then onward with the
/// interpolator's own features, must land on the same triplane as the direct
/// interpolation to `delta`. Gradients flow through both branches.
pub fn causal_loss(
    lim: &LimModel,
    tape: &mut Tape,
    source_features: &[Var],
    image_tokens: Var,
    delta: f64,
    alpha_rand: f64,
    trainable: bool,
) -> Result<CausalLossVars> {
    let rem = remaining_fraction(delta, alpha_rand)?;
    let first = lim.interpolate_on_tape(tape, source_features, image_tokens, alpha_rand, trainable)?;
    let second = lim.interpolate_on_tape(tape, &first.feature_vars, image_tokens, rem, trainable)?;
    let direct = lim.interpolate_on_tape(tape, source_features, image_tokens, delta, trainable)?;
    let loss = tape.mse(second.plane_tokens, direct.plane_tokens)?;
    Ok(CausalLossVars { loss, two_hop: second, direct })
}
