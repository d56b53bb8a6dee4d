use std::collections::HashMap;

use autodiff::{ParamSet, Tape, Var};

use crate::error::{ModelError, Result};

pub const LN_EPS: f64 = 1e-6;

/// Leases parameters onto a tape by name, memoizing so each parameter lands
/// on the tape once per pass. Frozen passes lease constants instead, which
/// keeps the backward sweep away from the whole subgraph.
pub struct Leaser<'p> {
    params: &'p ParamSet,
    trainable: bool,
    memo: HashMap<String, Var>,
}

impl<'p> Leaser<'p> {
    pub fn new(params: &'p ParamSet, trainable: bool) -> Self {
        Leaser { params, trainable, memo: HashMap::new() }
    }

    pub fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        if let Some(v) = self.memo.get(name) {
            return Ok(*v);
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| ModelError::Config(format!("missing parameter '{name}'")))?;
        let v = if self.trainable { tape.param(name, t) } else { tape.constant(t) };
        self.memo.insert(name.to_string(), v);
        Ok(v)
    }
}

/// Pre-norm attention sublayer: x + Wo * attn(LN(x) Wq, kv Wk, kv Wv).
/// `prefix` owns q/k/v/o projections and the query-stream layer norm.
pub fn attention_sublayer(
    tape: &mut Tape,
    lease: &mut Leaser,
    prefix: &str,
    x: Var,
    kv: Var,
    heads: usize,
) -> Result<Var> {
    let g = lease.get(tape, &format!("{prefix}/ln_g"))?;
    let b = lease.get(tape, &format!("{prefix}/ln_b"))?;
    let xn = tape.layer_norm(x, g, b, LN_EPS)?;
    let wq = lease.get(tape, &format!("{prefix}/wq"))?;
    let bq = lease.get(tape, &format!("{prefix}/bq"))?;
    let wk = lease.get(tape, &format!("{prefix}/wk"))?;
    let bk = lease.get(tape, &format!("{prefix}/bk"))?;
    let wv = lease.get(tape, &format!("{prefix}/wv"))?;
    let bv = lease.get(tape, &format!("{prefix}/bv"))?;
    let wo = lease.get(tape, &format!("{prefix}/wo"))?;
    let bo = lease.get(tape, &format!("{prefix}/bo"))?;
    let q = tape.matmul(xn, wq)?;
    let q = tape.add_row(q, bq)?;
    let k = tape.matmul(kv, wk)?;
    let k = tape.add_row(k, bk)?;
    let v = tape.matmul(kv, wv)?;
    let v = tape.add_row(v, bv)?;
    let a = tape.attention(q, k, v, heads)?;
    let o = tape.matmul(a, wo)?;
    let o = tape.add_row(o, bo)?;
    Ok(tape.add(x, o)?)
}

/// Pre-norm MLP sublayer: x + W2 gelu(W1 LN(x)).
pub fn mlp_sublayer(tape: &mut Tape, lease: &mut Leaser, prefix: &str, x: Var) -> Result<Var> {
    let g = lease.get(tape, &format!("{prefix}/ln_g"))?;
    let b = lease.get(tape, &format!("{prefix}/ln_b"))?;
    let xn = tape.layer_norm(x, g, b, LN_EPS)?;
    let w1 = lease.get(tape, &format!("{prefix}/w1"))?;
    let b1 = lease.get(tape, &format!("{prefix}/b1"))?;
    let w2 = lease.get(tape, &format!("{prefix}/w2"))?;
    let b2 = lease.get(tape, &format!("{prefix}/b2"))?;
    let h = tape.matmul(xn, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.gelu(h);
    let o = tape.matmul(h, w2)?;
    let o = tape.add_row(o, b2)?;
    Ok(tape.add(x, o)?)
}

/// Final head: LN then a linear projection of each token to its plane texel.
pub fn unpatch_head(tape: &mut Tape, lease: &mut Leaser, x: Var) -> Result<Var> {
    let g = lease.get(tape, "head/ln_g")?;
    let b = lease.get(tape, "head/ln_b")?;
    let xn = tape.layer_norm(x, g, b, LN_EPS)?;
    let w = lease.get(tape, "head/w")?;
    let bias = lease.get(tape, "head/b")?;
    let o = tape.matmul(xn, w)?;
    Ok(tape.add_row(o, bias)?)
}

/// Embeds raw patch tokens: tokens_raw @ W + b.
pub fn embed_tokens(tape: &mut Tape, lease: &mut Leaser, raw: Var) -> Result<Var> {
    let w = lease.get(tape, "patch_embed/w")?;
    let b = lease.get(tape, "patch_embed/b")?;
    let t = tape.matmul(raw, w)?;
    Ok(tape.add_row(t, b)?)
}
