use autodiff::{ParamSet, Tensor};
use field::FieldDecoder;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::lim::{ImageConditioning, LimModel};
use crate::lrm::LrmModel;

const INIT_STD: f64 = 0.02;

fn normal_tensor(shape: Vec<usize>, std: f64, rng: &mut impl FnMut() -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng() * std).collect()).expect("shape")
}

fn insert_attention(ps: &mut ParamSet, prefix: &str, d: usize, rng: &mut impl FnMut() -> f64) {
    ps.insert(&format!("{prefix}/ln_g"), Tensor::full(vec![d], 1.0));
    ps.insert(&format!("{prefix}/ln_b"), Tensor::zeros(vec![d]));
    for w in ["wq", "wk", "wv", "wo"] {
        ps.insert(&format!("{prefix}/{w}"), normal_tensor(vec![d, d], INIT_STD, rng));
    }
    for b in ["bq", "bk", "bv", "bo"] {
        ps.insert(&format!("{prefix}/{b}"), Tensor::zeros(vec![d]));
    }
}

fn insert_mlp(ps: &mut ParamSet, prefix: &str, d: usize, hidden: usize, rng: &mut impl FnMut() -> f64) {
    ps.insert(&format!("{prefix}/ln_g"), Tensor::full(vec![d], 1.0));
    ps.insert(&format!("{prefix}/ln_b"), Tensor::zeros(vec![d]));
    ps.insert(&format!("{prefix}/w1"), normal_tensor(vec![d, hidden], INIT_STD, rng));
    ps.insert(&format!("{prefix}/b1"), Tensor::zeros(vec![hidden]));
    ps.insert(&format!("{prefix}/w2"), normal_tensor(vec![hidden, d], INIT_STD, rng));
    ps.insert(&format!("{prefix}/b2"), Tensor::zeros(vec![d]));
}

/// Fresh reconstructor weights: gaussian(0.02) projections, unit layer
/// norms, zero biases, learned shape tokens, and a field decoder whose
/// sigma bias starts the scene empty.
pub fn init_lrm(config: &ModelConfig, rng: &mut impl FnMut() -> f64) -> Result<LrmModel> {
    config.validate()?;
    let d = config.width;
    let mut ps = ParamSet::new();
    ps.insert("patch_embed/w", normal_tensor(vec![config.patch_dim(), d], INIT_STD, rng));
    ps.insert("patch_embed/b", Tensor::zeros(vec![d]));
    ps.insert("shape_tokens", normal_tensor(vec![config.shape_tokens(), d], INIT_STD, rng));
    for b in 0..config.lrm_blocks {
        insert_attention(&mut ps, &format!("block{b:02}/cross_img"), d, rng);
        insert_attention(&mut ps, &format!("block{b:02}/self"), d, rng);
        insert_mlp(&mut ps, &format!("block{b:02}/mlp"), d, config.mlp_hidden(), rng);
    }
    ps.insert("head/ln_g", Tensor::full(vec![d], 1.0));
    ps.insert("head/ln_b", Tensor::zeros(vec![d]));
    ps.insert("head/w", normal_tensor(vec![d, config.plane_channels], INIT_STD, rng));
    ps.insert("head/b", Tensor::zeros(vec![config.plane_channels]));
    let dec = FieldDecoder::init(config.plane_channels, INIT_STD, &mut || rng());
    for (name, t) in dec.params.iter() {
        ps.insert(name, t.clone());
    }
    LrmModel::new(ps, config.clone())
}

fn copy_group(dst: &mut ParamSet, dst_prefix: &str, src: &ParamSet, src_prefix: &str, names: &[&str]) {
    for n in names {
        let t = src
            .get(&format!("{src_prefix}/{n}"))
            .unwrap_or_else(|| panic!("missing source param {src_prefix}/{n}"))
            .clone();
        dst.insert(&format!("{dst_prefix}/{n}"), t);
    }
}

const ATTN_NAMES: [&str; 10] = ["ln_g", "ln_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"];
const MLP_NAMES: [&str; 6] = ["ln_g", "ln_b", "w1", "b1", "w2", "b2"];

/// Interpolator weights derived from a trained reconstructor: block i copies
/// reconstructor block `lrm_blocks - lim_blocks + i`, with the
/// feature cross-attention taken from that block's self-attention, the image
/// cross-attention and self-attention from their namesakes, and the head and
/// patch embedding shared. The time-injection projection starts as identity
/// on the token features with a small random mix of the encoding.
pub fn init_lim_from_lrm(
    lrm: &LrmModel,
    conditioning: ImageConditioning,
    rng: &mut impl FnMut() -> f64,
) -> Result<LimModel> {
    let config = lrm.config.clone();
    let d = config.width;
    let mut ps = ParamSet::new();
    let in_dim = d + 2 * config.alpha_dim;
    let mut w_in = normal_tensor(vec![in_dim, d], INIT_STD, rng);
    for i in 0..d {
        w_in.data_mut()[i * d + i] = 1.0;
    }
    ps.insert("alpha_proj/w", w_in);
    ps.insert("alpha_proj/b", Tensor::zeros(vec![d]));
    copy_group(&mut ps, "patch_embed", &lrm.params, "patch_embed", &["w", "b"]);
    let first = config.lrm_blocks - config.lim_blocks;
    for i in 0..config.lim_blocks {
        let src = first + i;
        copy_group(
            &mut ps,
            &format!("block{i:02}/cross_feat"),
            &lrm.params,
            &format!("block{src:02}/self"),
            &ATTN_NAMES,
        );
        copy_group(
            &mut ps,
            &format!("block{i:02}/cross_img"),
            &lrm.params,
            &format!("block{src:02}/cross_img"),
            &ATTN_NAMES,
        );
        copy_group(
            &mut ps,
            &format!("block{i:02}/self"),
            &lrm.params,
            &format!("block{src:02}/self"),
            &ATTN_NAMES,
        );
        copy_group(
            &mut ps,
            &format!("block{i:02}/mlp"),
            &lrm.params,
            &format!("block{src:02}/mlp"),
            &MLP_NAMES,
        );
    }
    copy_group(&mut ps, "head", &lrm.params, "head", &["ln_g", "ln_b", "w", "b"]);
    if conditioning == ImageConditioning::SourceAndTarget {
        ps.insert("keyframe_emb", Tensor::zeros(vec![2, d]));
    }
    LimModel::new(ps, config, conditioning)
}
