use autodiff::{ParamSet, Result as AdResult, Tape, Tensor, Var};
use geometry::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// Plane order and the box coordinates each plane is sampled at.
/// `planes[0]` is XY sampled at (x, y), `planes[1]` XZ at (x, z),
/// `planes[2]` YZ at (y, z); a point's feature is the sum of the three.
#[derive(Debug, Clone)]
pub struct Triplane {
    pub planes: [Tensor; 3],
    pub channels: usize,
    pub resolution: usize,
}

impl Triplane {
    pub fn zeros(channels: usize, resolution: usize) -> Self {
        let shape = vec![channels, resolution, resolution];
        Triplane {
            planes: [Tensor::zeros(shape.clone()), Tensor::zeros(shape.clone()), Tensor::zeros(shape)],
            channels,
            resolution,
        }
    }

    pub fn new(planes: [Tensor; 3]) -> Result<Self> {
        let shape = planes[0].shape().to_vec();
        if shape.len() != 3 || shape[1] != shape[2] {
            return Err(FieldError::Config(format!("plane shape must be [c,s,s]: {shape:?}")));
        }
        for p in &planes {
            if p.shape() != shape.as_slice() {
                return Err(FieldError::Config("triplane planes must share one shape".into()));
            }
            p.validate_finite("triplane plane")
                .map_err(|_| FieldError::Config("non-finite plane values".into()))?;
        }
        Ok(Triplane { channels: shape[0], resolution: shape[1], planes })
    }

    /// uv lookups for a world point into each of the three planes.
    pub fn plane_uvs(p: Vec3) -> [[f64; 2]; 3] {
        [[p.x, p.y], [p.x, p.z], [p.y, p.z]]
    }

    /// Elementwise linear blend `(1-alpha)*a + alpha*b`.
    pub fn lerp(a: &Triplane, b: &Triplane, alpha: f64) -> Result<Triplane> {
        if a.channels != b.channels || a.resolution != b.resolution {
            return Err(FieldError::Config("triplane lerp: shape mismatch".into()));
        }
        let planes = [0, 1, 2].map(|i| {
            let data: Vec<f64> = a.planes[i]
                .data()
                .iter()
                .zip(b.planes[i].data().iter())
                .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
                .collect();
            Tensor::new(a.planes[i].shape().to_vec(), data).expect("same shape")
        });
        Ok(Triplane { planes, channels: a.channels, resolution: a.resolution })
    }

    /// Mean squared difference over all plane entries.
    pub fn mse(a: &Triplane, b: &Triplane) -> Result<f64> {
        if a.channels != b.channels || a.resolution != b.resolution {
            return Err(FieldError::Config("triplane mse: shape mismatch".into()));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..3 {
            for (x, y) in a.planes[i].data().iter().zip(b.planes[i].data().iter()) {
                let d = x - y;
                sum += d * d;
            }
            n += a.planes[i].numel();
        }
        Ok(sum / n as f64)
    }
}

/// Triplane leased onto a tape (one var per plane).
#[derive(Debug, Clone, Copy)]
pub struct TriplaneVars {
    pub planes: [Var; 3],
}

impl TriplaneVars {
    pub fn constant(tape: &mut Tape, tri: &Triplane) -> Self {
        TriplaneVars { planes: [0, 1, 2].map(|i| tape.constant(&tri.planes[i])) }
    }

    pub fn leaf(tape: &mut Tape, tri: &Triplane) -> Self {
        TriplaneVars { planes: [0, 1, 2].map(|i| tape.leaf(&tri.planes[i])) }
    }
}

pub const DECODER_HIDDEN: usize = 32;
/// Decoder head layout: rgb 3, sigma 1, aux 3.
pub const DECODER_OUT: usize = 7;

/// MLP decoding a sampled triplane feature to (rgb, sigma, aux):
/// two gelu hidden layers, sigmoid rgb, softplus sigma, linear aux.
#[derive(Debug, Clone)]
pub struct FieldDecoder {
    pub params: ParamSet,
    pub channels: usize,
    pub hidden: usize,
}

pub const DECODER_PARAM_NAMES: [&str; 6] = [
    "decoder/w1",
    "decoder/b1",
    "decoder/w2",
    "decoder/b2",
    "decoder/w3",
    "decoder/b3",
];

impl FieldDecoder {
    /// Initializes with the given weight scale; the sigma bias starts at -10
    /// so an untrained field is empty rather than fog.
    pub fn init(channels: usize, scale: f64, rng: &mut impl FnMut() -> f64) -> Self {
        let h = DECODER_HIDDEN;
        let mut params = ParamSet::new();
        let mut mat = |r: usize, c: usize| {
            Tensor::new(vec![r, c], (0..r * c).map(|_| rng() * scale).collect()).expect("shape")
        };
        params.insert("decoder/w1", mat(channels, h));
        params.insert("decoder/b1", Tensor::zeros(vec![h]));
        params.insert("decoder/w2", mat(h, h));
        params.insert("decoder/b2", Tensor::zeros(vec![h]));
        params.insert("decoder/w3", mat(h, DECODER_OUT));
        let mut b3 = Tensor::zeros(vec![DECODER_OUT]);
        b3.data_mut()[3] = -10.0;
        params.insert("decoder/b3", b3);
        FieldDecoder { params, channels, hidden: h }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        for name in DECODER_PARAM_NAMES {
            if !params.contains(name) {
                return Err(FieldError::Config(format!("decoder missing '{name}'")));
            }
        }
        let w1 = params.get("decoder/w1").unwrap();
        let channels = w1.shape()[0];
        let hidden = w1.shape()[1];
        Ok(FieldDecoder { params, channels, hidden })
    }
}

/// Decoder leased onto a tape.
#[derive(Debug, Clone, Copy)]
pub struct DecoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
}

impl DecoderVars {
    pub fn constant(tape: &mut Tape, dec: &FieldDecoder) -> Self {
        let g = |t: &Tensor, tape: &mut Tape| tape.constant(t);
        Self::build(tape, dec, g)
    }

    /// Leases decoder weights as named parameters (for training).
    pub fn param(tape: &mut Tape, dec: &FieldDecoder) -> Self {
        DecoderVars {
            w1: tape.param("decoder/w1", dec.params.get("decoder/w1").unwrap()),
            b1: tape.param("decoder/b1", dec.params.get("decoder/b1").unwrap()),
            w2: tape.param("decoder/w2", dec.params.get("decoder/w2").unwrap()),
            b2: tape.param("decoder/b2", dec.params.get("decoder/b2").unwrap()),
            w3: tape.param("decoder/w3", dec.params.get("decoder/w3").unwrap()),
            b3: tape.param("decoder/b3", dec.params.get("decoder/b3").unwrap()),
        }
    }

    fn build(tape: &mut Tape, dec: &FieldDecoder, f: impl Fn(&Tensor, &mut Tape) -> Var) -> Self {
        DecoderVars {
            w1: f(dec.params.get("decoder/w1").unwrap(), tape),
            b1: f(dec.params.get("decoder/b1").unwrap(), tape),
            w2: f(dec.params.get("decoder/w2").unwrap(), tape),
            b2: f(dec.params.get("decoder/b2").unwrap(), tape),
            w3: f(dec.params.get("decoder/w3").unwrap(), tape),
            b3: f(dec.params.get("decoder/b3").unwrap(), tape),
        }
    }
}

/// Raw decoder head outputs for a batch of points, before activations:
/// `[n, 7]` columns (rgb logits 3, sigma pre-softplus 1, aux 3).
pub fn decode_raw(tape: &mut Tape, dec: DecoderVars, features: Var) -> AdResult<Var> {
    let h1 = tape.matmul(features, dec.w1)?;
    let h1 = tape.add_row(h1, dec.b1)?;
    let h1 = tape.gelu(h1);
    let h2 = tape.matmul(h1, dec.w2)?;
    let h2 = tape.add_row(h2, dec.b2)?;
    let h2 = tape.gelu(h2);
    let out = tape.matmul(h2, dec.w3)?;
    tape.add_row(out, dec.b3)
}

/// Sampled and decoded field values for a batch of points.
pub struct PointSamples {
    /// `[n,3]` in [0,1]
    pub rgb: Var,
    /// `[n,1]` nonnegative
    pub sigma: Var,
    /// `[n,3]` unconstrained
    pub aux: Var,
}

/// Sums the three bilinear plane lookups and decodes. Points may lie
/// anywhere; lookups clamp to the box.
pub fn sample_points(
    tape: &mut Tape,
    tri: TriplaneVars,
    dec: DecoderVars,
    points: &[Vec3],
) -> AdResult<PointSamples> {
    let n = points.len();
    let mut uv = [Vec::with_capacity(n * 2), Vec::with_capacity(n * 2), Vec::with_capacity(n * 2)];
    for p in points {
        let uvs = Triplane::plane_uvs(*p);
        for k in 0..3 {
            uv[k].push(uvs[k][0]);
            uv[k].push(uvs[k][1]);
        }
    }
    let mut feat: Option<Var> = None;
    for k in 0..3 {
        let uv_var = tape.constant_from(vec![n, 2], std::mem::take(&mut uv[k]));
        let s = tape.bilinear_sample(tri.planes[k], uv_var)?;
        feat = Some(match feat {
            None => s,
            Some(f) => tape.add(f, s)?,
        });
    }
    let raw = decode_raw(tape, dec, feat.expect("three planes"))?;
    let rgb_logits = tape.narrow(raw, 1, 0, 3)?;
    let rgb = tape.sigmoid(rgb_logits);
    let sigma_raw = tape.narrow(raw, 1, 3, 1)?;
    let sigma = tape.softplus(sigma_raw);
    let aux = tape.narrow(raw, 1, 4, 3)?;
    Ok(PointSamples { rgb, sigma, aux })
}

/// Convenience non-differentiating point query (constant-leased tape).
pub fn eval_points(
    tri: &Triplane,
    dec: &FieldDecoder,
    points: &[Vec3],
) -> (Vec<[f64; 3]>, Vec<f64>, Vec<[f64; 3]>) {
    let mut tape = Tape::new();
    let tv = TriplaneVars::constant(&mut tape, tri);
    let dv = DecoderVars::constant(&mut tape, dec);
    let s = sample_points(&mut tape, tv, dv, points).expect("shapes consistent");
    let rgb = tape
        .value(s.rgb)
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let sigma = tape.value(s.sigma).to_vec();
    let aux = tape
        .value(s.aux)
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    (rgb, sigma, aux)
}
