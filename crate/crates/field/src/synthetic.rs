//! Hand-constructed triplane/decoder pairs with known closed-form fields.
//! Used by validation suites across the workspace: the decoder's gelu
//! layers are driven in their asymptotic linear region so the composed
//! field matches the target function to ~1e-6.

use autodiff::{ParamSet, Tensor};
use geometry::{Mat3, Vec3};

use crate::triplane::{FieldDecoder, Triplane, DECODER_HIDDEN, DECODER_OUT};

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

fn softplus_inv(y: f64) -> f64 {
    // softplus(x) = y  =>  x = ln(e^y - 1); y == 0 maps to a value whose
    // exp underflows to exactly zero.
    if y <= 0.0 {
        -800.0
    } else if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

/// Decoder whose hidden path is inert: every output is its bias.
/// rgb = `color`, sigma = `sigma0` (exactly 0 when `sigma0 == 0`), aux = `aux`.
pub fn constant_decoder(channels: usize, sigma0: f64, color: [f64; 3], aux: [f64; 3]) -> FieldDecoder {
    let h = DECODER_HIDDEN;
    let mut params = ParamSet::new();
    params.insert("decoder/w1", Tensor::zeros(vec![channels, h]));
    params.insert("decoder/b1", Tensor::zeros(vec![h]));
    params.insert("decoder/w2", Tensor::zeros(vec![h, h]));
    params.insert("decoder/b2", Tensor::zeros(vec![h]));
    params.insert("decoder/w3", Tensor::zeros(vec![h, DECODER_OUT]));
    let mut b3 = Tensor::zeros(vec![DECODER_OUT]);
    let d = b3.data_mut();
    d[0] = logit(color[0]);
    d[1] = logit(color[1]);
    d[2] = logit(color[2]);
    d[3] = softplus_inv(sigma0);
    d[4] = aux[0];
    d[5] = aux[1];
    d[6] = aux[2];
    params.insert("decoder/b3", b3);
    FieldDecoder { params, channels, hidden: h }
}

/// Constant field everywhere: zero planes plus [`constant_decoder`].
pub fn constant_field(
    channels: usize,
    resolution: usize,
    sigma0: f64,
    color: [f64; 3],
    aux: [f64; 3],
) -> (Triplane, FieldDecoder) {
    (Triplane::zeros(channels, resolution), constant_decoder(channels, sigma0, color, aux))
}

/// Offset that keeps the gelu units in their asymptotic identity region for
/// inputs in the unit box.
const LIFT: f64 = 8.0;

/// Paints plane channel `ch` with `f(u, v)` evaluated at texel centers.
fn paint(plane: &mut Tensor, ch: usize, s: usize, f: impl Fn(f64, f64) -> f64) {
    let data = plane.data_mut();
    for i in 0..s {
        let v = -1.0 + 2.0 * i as f64 / (s - 1) as f64;
        for j in 0..s {
            let u = -1.0 + 2.0 * j as f64 / (s - 1) as f64;
            data[ch * s * s + i * s + j] = f(u, v);
        }
    }
}

/// Ball of radius `r` centered at `center`: sigma = softplus(sharp * (r^2 -
/// |p-center|^2)), flat `color`, and aux the affine map `aux_lin * p +
/// aux_off` (use identity/zero for canonical-at-source labels).
///
/// Channel 0 carries the quadratic ball profile (bilinear-interpolated, so
/// O(h^2) radial error); channels 1..4 carry x, y, z exactly. Requires
/// `channels >= 4`.
pub fn ball_field(
    channels: usize,
    resolution: usize,
    r: f64,
    center: Vec3,
    sharp: f64,
    color: [f64; 3],
    aux_lin: Mat3,
    aux_off: Vec3,
) -> (Triplane, FieldDecoder) {
    assert!(channels >= 4, "ball_field needs at least 4 channels");
    let s = resolution;
    let mut tri = Triplane::zeros(channels, s);
    let c2 = center.dot(center);
    let rterm = (r * r - c2) / 3.0;
    // planes[0] XY at (x,y), planes[1] XZ at (x,z), planes[2] YZ at (y,z):
    // summed they give r^2 - |p - center|^2 in channel 0 and (x, y, z) in
    // channels 1..4 (each linear coordinate split over its two planes).
    paint(&mut tri.planes[0], 0, s, |x, y| {
        rterm - 0.5 * x * x - 0.5 * y * y + center.x * x + center.y * y
    });
    paint(&mut tri.planes[1], 0, s, |x, z| {
        rterm - 0.5 * x * x - 0.5 * z * z + center.x * x + center.z * z
    });
    paint(&mut tri.planes[2], 0, s, |y, z| {
        rterm - 0.5 * y * y - 0.5 * z * z + center.y * y + center.z * z
    });
    paint(&mut tri.planes[0], 1, s, |x, _| 0.5 * x);
    paint(&mut tri.planes[1], 1, s, |x, _| 0.5 * x);
    paint(&mut tri.planes[0], 2, s, |_, y| 0.5 * y);
    paint(&mut tri.planes[2], 2, s, |y, _| 0.5 * y);
    paint(&mut tri.planes[1], 3, s, |_, z| 0.5 * z);
    paint(&mut tri.planes[2], 3, s, |_, z| 0.5 * z);

    let h = DECODER_HIDDEN;
    let mut params = ParamSet::new();
    // Hidden units 0..4 carry (feature_i + LIFT) through both gelu layers.
    let mut w1 = Tensor::zeros(vec![channels, h]);
    let mut b1 = Tensor::zeros(vec![h]);
    for i in 0..4 {
        w1.data_mut()[i * h + i] = 1.0;
        b1.data_mut()[i] = LIFT;
    }
    let mut w2 = Tensor::zeros(vec![h, h]);
    for i in 0..4 {
        w2.data_mut()[i * h + i] = 1.0;
    }
    let b2 = Tensor::zeros(vec![h]);
    let mut w3 = Tensor::zeros(vec![h, DECODER_OUT]);
    let mut b3 = Tensor::zeros(vec![DECODER_OUT]);
    {
        let w = w3.data_mut();
        let b = b3.data_mut();
        b[0] = logit(color[0]);
        b[1] = logit(color[1]);
        b[2] = logit(color[2]);
        // sigma = softplus(sharp * (ball + LIFT) - sharp * LIFT)
        w[3] = sharp; // hidden 0 -> sigma column
        b[3] = -sharp * LIFT;
        for row in 0..3 {
            for (col_h, comp) in [(1usize, 0usize), (2, 1), (3, 2)] {
                w[col_h * DECODER_OUT + 4 + row] = aux_lin.m[3 * row + comp];
            }
            let rowsum = aux_lin.m[3 * row] + aux_lin.m[3 * row + 1] + aux_lin.m[3 * row + 2];
            b[4 + row] = aux_off.to_array()[row] - LIFT * rowsum;
        }
    }
    params.insert("decoder/w1", w1);
    params.insert("decoder/b1", b1);
    params.insert("decoder/w2", w2);
    params.insert("decoder/b2", b2);
    params.insert("decoder/w3", w3);
    params.insert("decoder/b3", b3);
    let dec = FieldDecoder { params, channels, hidden: h };
    (tri, dec)
}

/// Identity-labelled ball: aux(p) = p, the canonical-at-source convention.
pub fn canonical_ball_field(
    channels: usize,
    resolution: usize,
    r: f64,
    center: Vec3,
    sharp: f64,
    color: [f64; 3],
) -> (Triplane, FieldDecoder) {
    ball_field(channels, resolution, r, center, sharp, color, Mat3::IDENTITY, Vec3::ZERO)
}
