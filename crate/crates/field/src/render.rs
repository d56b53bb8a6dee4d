use autodiff::{Result as AdResult, Tape, Var};
use geometry::{Camera, Vec3};

use crate::triplane::{sample_points, DecoderVars, FieldDecoder, FieldError, Result, Triplane, TriplaneVars};

/// Depth is reported as 0 where alpha falls below this.
pub const ALPHA_EPS: f64 = 1e-4;
pub const N_SAMPLES_TRAIN: usize = 64;
pub const N_SAMPLES_EVAL: usize = 128;

/// Whole-image render: rgb/aux are row-major per-pixel triples, depth is the
/// alpha-normalized expected ray distance (0 where alpha < 1e-4).
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    pub aux: Vec<[f64; 3]>,
    pub height: usize,
    pub width: usize,
}

/// Per-ray quadrature positions. Midpoint rule when `jitter` is None,
/// stratified jitter (one uniform sample per bin) otherwise.
pub struct RaySampling {
    pub near: f64,
    pub far: f64,
    pub n_samples: usize,
}

impl RaySampling {
    pub fn delta(&self) -> f64 {
        (self.far - self.near) / self.n_samples as f64
    }

    /// Sample positions for one ray; `jitter[j]` in [0,1) offsets sample j
    /// within its bin.
    pub fn positions(&self, jitter: Option<&[f64]>) -> Vec<f64> {
        let d = self.delta();
        (0..self.n_samples)
            .map(|j| {
                let u = jitter.map(|w| w[j]).unwrap_or(0.5);
                self.near + (j as f64 + u) * d
            })
            .collect()
    }
}

/// Differentiable render vars for a chunk of rays.
pub struct RenderVars {
    /// `[r,3]`
    pub rgb: Var,
    /// `[r,1]`
    pub alpha: Var,
    /// `[r,1]`
    pub depth: Var,
    /// `[r,3]`
    pub aux: Var,
}

/// Emission-absorption quadrature over a chunk of rays on the tape.
///
/// For samples t_j with spacing delta: opacity `a_j = 1 - exp(-sigma_j d)`,
/// transmittance `T_j = exp(-sum_{i<j} sigma_i d)`, weights `w_j = T_j a_j`;
/// rgb/aux are weight-sums of the decoded values, alpha the weight total and
/// depth the alpha-normalized weighted sample position.
pub fn render_rays(
    tape: &mut Tape,
    tri: TriplaneVars,
    dec: DecoderVars,
    origins: &[Vec3],
    dirs: &[Vec3],
    ts: &[f64],
    n_samples: usize,
) -> AdResult<RenderVars> {
    let r = origins.len();
    debug_assert_eq!(ts.len(), r * n_samples);
    let delta = if r > 0 && n_samples > 1 { ts[1] - ts[0] } else { 0.0 };
    let mut points = Vec::with_capacity(r * n_samples);
    for (i, (o, d)) in origins.iter().zip(dirs.iter()).enumerate() {
        for j in 0..n_samples {
            points.push(*o + *d * ts[i * n_samples + j]);
        }
    }
    let samples = sample_points(tape, tri, dec, &points)?;

    let sigma = tape.reshape(samples.sigma, vec![r, n_samples])?;
    let tau = tape.scale(sigma, delta);
    let cum = tape.cumsum_exclusive(tau)?;
    let neg_cum = tape.neg(cum);
    let trans = tape.exp(neg_cum); // T_j
    let neg_tau = tape.neg(tau);
    let exp_neg_tau = tape.exp(neg_tau);
    let ones = tape.constant_from(vec![r, n_samples], vec![1.0; r * n_samples]);
    let opacity = tape.sub(ones, exp_neg_tau)?; // a_j
    let weights = tape.mul(trans, opacity)?; // w_j

    let alpha = tape.sum_last(weights)?;

    let mut rgb_cols = Vec::with_capacity(3);
    let mut aux_cols = Vec::with_capacity(3);
    for c in 0..3 {
        let col = tape.narrow(samples.rgb, 1, c, 1)?;
        let col = tape.reshape(col, vec![r, n_samples])?;
        let wc = tape.mul(weights, col)?;
        rgb_cols.push(tape.sum_last(wc)?);
        let acol = tape.narrow(samples.aux, 1, c, 1)?;
        let acol = tape.reshape(acol, vec![r, n_samples])?;
        let wa = tape.mul(weights, acol)?;
        aux_cols.push(tape.sum_last(wa)?);
    }
    let rgb = tape.concat(1, &rgb_cols)?;
    let aux = tape.concat(1, &aux_cols)?;

    let t_const = tape.constant_from(vec![r, n_samples], ts.to_vec());
    let wt = tape.mul(weights, t_const)?;
    let depth_un = tape.sum_last(wt)?;
    let alpha_safe = tape.clamp_min(alpha, ALPHA_EPS);
    let inv = tape.recip(alpha_safe);
    let depth_norm = tape.mul(depth_un, inv)?;
    let gate: Vec<f64> =
        tape.value(alpha).iter().map(|&a| if a >= ALPHA_EPS { 1.0 } else { 0.0 }).collect();
    let gate = tape.constant_from(vec![r, 1], gate);
    let depth = tape.mul(depth_norm, gate)?;

    Ok(RenderVars { rgb, alpha, depth, aux })
}

/// Deterministic per-(pixel, sample) jitter values in [0,1) derived from a
/// seed; used by stratified training-time sampling.
pub fn stratified_jitter(seed: u64, ray_index: u64, n_samples: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_samples);
    let mut state = seed ^ ray_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..n_samples {
        // splitmix64
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        out.push((z >> 11) as f64 / (1u64 << 53) as f64);
    }
    out
}

/// Renders a full image with midpoint (eval) sampling, chunked over rays.
pub fn render_image(
    tri: &Triplane,
    dec: &FieldDecoder,
    camera: &Camera,
    near: f64,
    far: f64,
    n_samples: usize,
) -> Result<RenderOutput> {
    if n_samples < 2 {
        return Err(FieldError::Config(format!("n_samples must be >= 2, got {n_samples}")));
    }
    let rays = geometry::make_rays(camera, near, far)
        .map_err(|e| FieldError::Config(e.to_string()))?;
    let sampling = RaySampling { near, far, n_samples };
    let base_ts = sampling.positions(None);
    let n = rays.len();
    let mut out = RenderOutput {
        rgb: vec![[0.0; 3]; n],
        depth: vec![0.0; n],
        alpha: vec![0.0; n],
        aux: vec![[0.0; 3]; n],
        height: camera.height,
        width: camera.width,
    };
    const CHUNK: usize = 1024;
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let mut ts = Vec::with_capacity(len * n_samples);
        for _ in 0..len {
            ts.extend_from_slice(&base_ts);
        }
        let mut tape = Tape::new();
        let tv = TriplaneVars::constant(&mut tape, tri);
        let dv = DecoderVars::constant(&mut tape, dec);
        let rv = render_rays(
            &mut tape,
            tv,
            dv,
            &rays.origins[start..start + len],
            &rays.directions[start..start + len],
            &ts,
            n_samples,
        )
        .map_err(FieldError::Ad)?;
        let rgb = tape.value(rv.rgb);
        let aux = tape.value(rv.aux);
        let alpha = tape.value(rv.alpha);
        let depth = tape.value(rv.depth);
        for i in 0..len {
            out.rgb[start + i] = [rgb[i * 3], rgb[i * 3 + 1], rgb[i * 3 + 2]];
            out.aux[start + i] = [aux[i * 3], aux[i * 3 + 1], aux[i * 3 + 2]];
            out.alpha[start + i] = alpha[i];
            out.depth[start + i] = depth[i];
        }
        start += len;
    }
    Ok(out)
}
