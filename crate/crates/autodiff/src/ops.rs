use crate::error::{AdError, Result};
use crate::tape::{Op, Tape, Var};

pub(crate) const BCE_CLAMP: f64 = 1e-7;

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_scalar(x: f64) -> f64 {
    // log(1 + e^x), stable for large |x|.
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_deriv(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// C[m,n] = A[m,k] * B[k,n], row-major.
pub(crate) fn dgemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C[m,k] = G[m,n] * B[k,n]^T.
pub(crate) fn dgemm_nt(m: usize, n: usize, k: usize, g: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0,
            g.as_ptr(), n as isize, 1,
            b.as_ptr(), 1, n as isize,
            0.0,
            c.as_mut_ptr(), k as isize, 1,
        );
    }
}

/// C[k,n] = A[m,k]^T * G[m,n].
pub(crate) fn dgemm_tn(k: usize, m: usize, n: usize, a: &[f64], g: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            k, m, n, 1.0,
            a.as_ptr(), 1, k as isize,
            g.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl Tape {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(AdError::Shape(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data: Vec<f64> =
            self.value(a).iter().zip(self.value(b).iter()).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(data, shape, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data: Vec<f64> =
            self.value(a).iter().zip(self.value(b).iter()).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(data, shape, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data: Vec<f64> =
            self.value(a).iter().zip(self.value(b).iter()).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(data, shape, Op::Mul(a, b), ng))
    }

    /// `[n,k] + [1,k]`: broadcasts `row` over the leading dimension.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ash, rsh) = (self.shape(a).to_vec(), self.shape(row).to_vec());
        let k = *ash.last().ok_or_else(|| AdError::Shape("add_row on scalar".into()))?;
        if rsh.iter().product::<usize>() != k {
            return Err(AdError::Shape(format!("add_row: {ash:?} + {rsh:?}")));
        }
        let rd = self.value(row).to_vec();
        let data: Vec<f64> = self
            .value(a)
            .chunks_exact(k)
            .flat_map(|chunk| chunk.iter().zip(rd.iter()).map(|(x, y)| x + y))
            .collect();
        let ng = self.needs_grad(a) || self.needs_grad(row);
        Ok(self.push(data, ash, Op::AddRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x + s).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::AddScalar(a), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| -x).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Neg(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.exp()).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.ln()).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Ln(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.abs()).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Abs(a), ng)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| 1.0 / x).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Recip(a), ng)
    }

    pub fn clamp_min(&mut self, a: Var, m: f64) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.max(m)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::ClampMin(a, m), ng)
    }

    pub fn clamp_max(&mut self, a: Var, m: f64) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.min(m)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::ClampMax(a, m), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Relu(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| gelu_scalar(*x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Gelu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| sigmoid_scalar(*x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Sigmoid(a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| softplus_scalar(*x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs_grad(a);
        self.push(data, shape, Op::Softplus(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        if ash.len() != 2 || bsh.len() != 2 {
            return Err(AdError::Shape(format!("matmul needs rank-2: {ash:?} x {bsh:?}")));
        }
        let (m, k, k2, n) = (ash[0], ash[1], bsh[0], bsh[1]);
        if k != k2 {
            return Err(AdError::Shape(format!("matmul inner dims: {ash:?} x {bsh:?}")));
        }
        let mut data = vec![0.0; m * n];
        dgemm_nn(m, k, n, self.value(a), self.value(b), &mut data);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(data, vec![m, n], Op::Matmul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ash = self.shape(a);
        if ash.len() != 2 {
            return Err(AdError::Shape(format!("transpose needs rank-2: {ash:?}")));
        }
        let (r, c) = (ash[0], ash[1]);
        let src = self.value(a);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs_grad(a);
        Ok(self.push(data, vec![c, r], Op::Transpose(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.numel(a) {
            return Err(AdError::Shape(format!(
                "reshape {:?} -> {shape:?}",
                self.shape(a)
            )));
        }
        let data = self.value(a).to_vec();
        let ng = self.needs_grad(a);
        Ok(self.push(data, shape, Op::Reshape(a), ng))
    }

    /// Concatenates rank-2 tensors along `axis` (0 or 1).
    pub fn concat(&mut self, axis: usize, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(AdError::Shape("concat of zero inputs".into()));
        }
        if axis > 1 {
            return Err(AdError::Shape(format!("concat axis {axis} unsupported")));
        }
        for v in inputs {
            if self.shape(*v).len() != 2 {
                return Err(AdError::Shape("concat needs rank-2 inputs".into()));
            }
        }
        let ng = inputs.iter().any(|v| self.needs_grad(*v));
        if axis == 0 {
            let cols = self.shape(inputs[0])[1];
            let mut rows = 0;
            let mut data = Vec::new();
            for v in inputs {
                if self.shape(*v)[1] != cols {
                    return Err(AdError::Shape("concat axis 0: column mismatch".into()));
                }
                rows += self.shape(*v)[0];
                data.extend_from_slice(self.value(*v));
            }
            Ok(self.push(data, vec![rows, cols], Op::Concat { axis, inputs: inputs.to_vec() }, ng))
        } else {
            let rows = self.shape(inputs[0])[0];
            let mut cols = 0;
            for v in inputs {
                if self.shape(*v)[0] != rows {
                    return Err(AdError::Shape("concat axis 1: row mismatch".into()));
                }
                cols += self.shape(*v)[1];
            }
            let mut data = vec![0.0; rows * cols];
            let mut off = 0;
            for v in inputs {
                let c = self.shape(*v)[1];
                let src = self.value(*v);
                for r in 0..rows {
                    data[r * cols + off..r * cols + off + c]
                        .copy_from_slice(&src[r * c..(r + 1) * c]);
                }
                off += c;
            }
            Ok(self.push(data, vec![rows, cols], Op::Concat { axis, inputs: inputs.to_vec() }, ng))
        }
    }

    /// Slices `len` indices starting at `start` along `axis` (rank-2, axis 0 or 1).
    pub fn narrow(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let ish = self.shape(input).to_vec();
        if axis >= ish.len() || start + len > ish[axis] {
            return Err(AdError::Shape(format!(
                "narrow axis {axis} [{start}..{}] of {ish:?}",
                start + len
            )));
        }
        let ng = self.needs_grad(input);
        if axis == 0 {
            let row: usize = ish[1..].iter().product();
            let data = self.value(input)[start * row..(start + len) * row].to_vec();
            let mut shape = ish.clone();
            shape[0] = len;
            Ok(self.push(data, shape, Op::Narrow { input, axis, start, len }, ng))
        } else if ish.len() == 2 {
            let (rows, cols) = (ish[0], ish[1]);
            let src = self.value(input);
            let mut data = vec![0.0; rows * len];
            for r in 0..rows {
                data[r * len..(r + 1) * len]
                    .copy_from_slice(&src[r * cols + start..r * cols + start + len]);
            }
            Ok(self.push(data, vec![rows, len], Op::Narrow { input, axis, start, len }, ng))
        } else {
            Err(AdError::Shape("narrow axis 1 needs rank-2".into()))
        }
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        let ng = self.needs_grad(a);
        self.push(vec![s], vec![1], Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.numel(a) as f64;
        let s: f64 = self.value(a).iter().sum::<f64>() / n;
        let ng = self.needs_grad(a);
        self.push(vec![s], vec![1], Op::MeanAll(a), ng)
    }

    /// `[r,n] -> [r,1]` row sums.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let ash = self.shape(a);
        if ash.len() != 2 {
            return Err(AdError::Shape(format!("sum_last needs rank-2: {ash:?}")));
        }
        let (rows, cols) = (ash[0], ash[1]);
        let src = self.value(a);
        let data: Vec<f64> = (0..rows).map(|r| src[r * cols..(r + 1) * cols].iter().sum()).collect();
        let ng = self.needs_grad(a);
        Ok(self.push(data, vec![rows, 1], Op::SumLast(a), ng))
    }

    /// Exclusive prefix sum along the last axis: `out[r,0] = 0`,
    /// `out[r,i] = sum_{j<i} x[r,j]`.
    pub fn cumsum_exclusive(&mut self, a: Var) -> Result<Var> {
        let ash = self.shape(a).to_vec();
        if ash.len() != 2 {
            return Err(AdError::Shape(format!("cumsum_exclusive needs rank-2: {ash:?}")));
        }
        let (rows, cols) = (ash[0], ash[1]);
        let src = self.value(a);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let mut acc = 0.0;
            for j in 0..cols {
                data[r * cols + j] = acc;
                acc += src[r * cols + j];
            }
        }
        let ng = self.needs_grad(a);
        Ok(self.push(data, ash, Op::CumsumExclusive(a), ng))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ash = self.shape(a).to_vec();
        if ash.len() != 2 {
            return Err(AdError::Shape(format!("softmax_rows needs rank-2: {ash:?}")));
        }
        let (rows, cols) = (ash[0], ash[1]);
        let src = self.value(a);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..cols {
                let e = (row[j] - m).exp();
                data[r * cols + j] = e;
                sum += e;
            }
            for j in 0..cols {
                data[r * cols + j] /= sum;
            }
        }
        let ng = self.needs_grad(a);
        Ok(self.push(data, ash, Op::SoftmaxRows(a), ng))
    }

    /// Row-wise layer normalization with affine parameters: each row of `x`
    /// is normalized to zero mean and unit variance, then scaled by `gamma`
    /// and shifted by `beta`. Rows with variance below `eps` output `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        if xsh.len() != 2 {
            return Err(AdError::Shape(format!("layer_norm needs rank-2: {xsh:?}")));
        }
        let (rows, cols) = (xsh[0], xsh[1]);
        if cols < 2 {
            return Err(AdError::Shape("layer_norm needs feature dim >= 2".into()));
        }
        if eps <= 0.0 {
            return Err(AdError::Config("layer_norm eps must be positive".into()));
        }
        if self.numel(gamma) != cols || self.numel(beta) != cols {
            return Err(AdError::Shape("layer_norm gamma/beta must match feature dim".into()));
        }
        let src = self.value(x);
        let gd = self.value(gamma).to_vec();
        let bd = self.value(beta).to_vec();
        let mut data = vec![0.0; rows * cols];
        let mut mean = vec![0.0; rows];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mu: f64 = row.iter().sum::<f64>() / cols as f64;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            mean[r] = mu;
            if var < eps {
                // Zero-variance convention: output beta.
                rstd[r] = 0.0;
                data[r * cols..(r + 1) * cols].copy_from_slice(&bd);
            } else {
                let rs = 1.0 / (var + eps).sqrt();
                rstd[r] = rs;
                for j in 0..cols {
                    data[r * cols + j] = (row[j] - mu) * rs * gd[j] + bd[j];
                }
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(gamma) || self.needs_grad(beta);
        Ok(self.push(data, xsh, Op::LayerNorm { x, gamma, beta, mean, rstd }, ng))
    }

    /// Multi-head scaled dot-product attention over packed heads.
    /// `q: [tq,d]`, `k,v: [tk,d]`, `d % heads == 0`; scale `1/sqrt(d/heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qsh, ksh, vsh) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if qsh.len() != 2 || ksh.len() != 2 || vsh.len() != 2 {
            return Err(AdError::Shape("attention needs rank-2 q/k/v".into()));
        }
        let d = qsh[1];
        if ksh[1] != d || vsh[1] != d || ksh[0] != vsh[0] {
            return Err(AdError::Shape(format!("attention shapes: q {qsh:?} k {ksh:?} v {vsh:?}")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(AdError::Config(format!("attention width {d} not divisible by {heads} heads")));
        }
        let (tq, tk) = (qsh[0], ksh[0]);
        let (out, lse) =
            attention_forward(self.value(q), tq, self.value(k), tk, self.value(v), d, heads);
        let ng = self.needs_grad(q) || self.needs_grad(k) || self.needs_grad(v);
        Ok(self.push(out, vec![tq, d], Op::Attention { q, k, v, heads, lse }, ng))
    }

    /// Bilinear sampling of a `[c,s,s]` plane at `[n,2]` uv positions in
    /// `[-1,1]^2` (clamped at the border). Grid convention: texel `i` sits at
    /// `-1 + 2*i/(s-1)`. Output `[n,c]`. Differentiable in plane and uv.
    pub fn bilinear_sample(&mut self, plane: Var, uv: Var) -> Result<Var> {
        let psh = self.shape(plane).to_vec();
        let ush = self.shape(uv).to_vec();
        if psh.len() != 3 || psh[1] != psh[2] {
            return Err(AdError::Shape(format!("bilinear plane must be [c,s,s]: {psh:?}")));
        }
        if psh[1] < 2 {
            return Err(AdError::Config("bilinear plane resolution must be >= 2".into()));
        }
        if ush.len() != 2 || ush[1] != 2 {
            return Err(AdError::Shape(format!("bilinear uv must be [n,2]: {ush:?}")));
        }
        let (c, s, n) = (psh[0], psh[1], ush[0]);
        let out = bilinear_forward(self.value(plane), c, s, self.value(uv), n);
        let ng = self.needs_grad(plane) || self.needs_grad(uv);
        Ok(self.push(out, vec![n, c], Op::Bilinear { plane, uv }, ng))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let n = self.numel(pred) as f64;
        let s: f64 = self
            .value(pred)
            .iter()
            .zip(self.value(target).iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let ng = self.needs_grad(pred) || self.needs_grad(target);
        Ok(self.push(vec![s / n], vec![1], Op::Mse { pred, target }, ng))
    }

    /// Mean absolute error over all elements.
    pub fn l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "l1")?;
        let n = self.numel(pred) as f64;
        let s: f64 = self
            .value(pred)
            .iter()
            .zip(self.value(target).iter())
            .map(|(p, t)| (p - t).abs())
            .sum();
        let ng = self.needs_grad(pred) || self.needs_grad(target);
        Ok(self.push(vec![s / n], vec![1], Op::L1 { pred, target }, ng))
    }

    /// Mean binary cross-entropy; predictions are clamped to
    /// `[1e-7, 1 - 1e-7]` before the logs so exact 0/1 alphas are safe.
    pub fn bce(&mut self, p: Var, y: Var) -> Result<Var> {
        self.same_shape(p, y, "bce")?;
        let n = self.numel(p) as f64;
        let s: f64 = self
            .value(p)
            .iter()
            .zip(self.value(y).iter())
            .map(|(&pv, &yv)| {
                let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln())
            })
            .sum();
        let ng = self.needs_grad(p) || self.needs_grad(y);
        Ok(self.push(vec![s / n], vec![1], Op::Bce { p, y }, ng))
    }
}

/// General strided dgemm: C[m,n] (+)= A[m,k] * B[k,n] with explicit
/// row/col strides per operand.
#[allow(clippy::too_many_arguments)]
fn dgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: *mut f64,
    rsc: isize,
    csc: isize,
) {
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Attention forward shared by the tape op. Heads are packed side by side in
/// the width dimension; score/probability matrices go through dgemm one head
/// at a time. Returns the `[tq,d]` output and per-(head, query-row)
/// log-sum-exp values for the backward recomputation of attention weights.
pub(crate) fn attention_forward(
    q: &[f64],
    tq: usize,
    k: &[f64],
    tk: usize,
    v: &[f64],
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![0.0; tq * d];
    let mut lse = vec![0.0; heads * tq];
    let mut scores = vec![0.0; tq * tk];
    let ds = d as isize;
    for h in 0..heads {
        let off = h * hd;
        // scores = Q_h K_h^T
        dgemm_strided(
            tq, hd, tk,
            unsafe { q.as_ptr().add(off) }, ds, 1,
            unsafe { k.as_ptr().add(off) }, 1, ds,
            0.0,
            scores.as_mut_ptr(), tk as isize, 1,
        );
        for i in 0..tq {
            let row = &mut scores[i * tk..(i + 1) * tk];
            let mut m = f64::NEG_INFINITY;
            for s in row.iter_mut() {
                *s *= scale;
                if *s > m {
                    m = *s;
                }
            }
            let mut sum = 0.0;
            for s in row.iter_mut() {
                *s = (*s - m).exp();
                sum += *s;
            }
            lse[h * tq + i] = m + sum.ln();
            let inv = 1.0 / sum;
            for s in row.iter_mut() {
                *s *= inv;
            }
        }
        // out_h = P V_h
        dgemm_strided(
            tq, tk, hd,
            scores.as_ptr(), tk as isize, 1,
            unsafe { v.as_ptr().add(off) }, ds, 1,
            0.0,
            unsafe { out.as_mut_ptr().add(off) }, ds, 1,
        );
    }
    (out, lse)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    q: &[f64],
    tq: usize,
    k: &[f64],
    tk: usize,
    v: &[f64],
    d: usize,
    heads: usize,
    lse: &[f64],
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut gq = vec![0.0; tq * d];
    let mut gk = vec![0.0; tk * d];
    let mut gv = vec![0.0; tk * d];
    let mut probs = vec![0.0; tq * tk];
    let mut dscore = vec![0.0; tq * tk];
    let ds = d as isize;
    for h in 0..heads {
        let off = h * hd;
        // Recompute P from Q, K and the stored log-sum-exp.
        dgemm_strided(
            tq, hd, tk,
            unsafe { q.as_ptr().add(off) }, ds, 1,
            unsafe { k.as_ptr().add(off) }, 1, ds,
            0.0,
            probs.as_mut_ptr(), tk as isize, 1,
        );
        for i in 0..tq {
            let l = lse[h * tq + i];
            for p in probs[i * tk..(i + 1) * tk].iter_mut() {
                *p = (*p * scale - l).exp();
            }
        }
        // dV_h = P^T dO_h
        dgemm_strided(
            tk, tq, hd,
            probs.as_ptr(), 1, tk as isize,
            unsafe { gout.as_ptr().add(off) }, ds, 1,
            0.0,
            unsafe { gv.as_mut_ptr().add(off) }, ds, 1,
        );
        // dP = dO_h V_h^T
        dgemm_strided(
            tq, hd, tk,
            unsafe { gout.as_ptr().add(off) }, ds, 1,
            unsafe { v.as_ptr().add(off) }, 1, ds,
            0.0,
            dscore.as_mut_ptr(), tk as isize, 1,
        );
        // dS = P o (dP - rowdot(dP, P)) * scale
        for i in 0..tq {
            let prow = &probs[i * tk..(i + 1) * tk];
            let drow = &mut dscore[i * tk..(i + 1) * tk];
            let dot: f64 = prow.iter().zip(drow.iter()).map(|(p, g)| p * g).sum();
            for (g, p) in drow.iter_mut().zip(prow.iter()) {
                *g = p * (*g - dot) * scale;
            }
        }
        // dQ_h = dS K_h ; dK_h = dS^T Q_h
        dgemm_strided(
            tq, tk, hd,
            dscore.as_ptr(), tk as isize, 1,
            unsafe { k.as_ptr().add(off) }, ds, 1,
            0.0,
            unsafe { gq.as_mut_ptr().add(off) }, ds, 1,
        );
        dgemm_strided(
            tk, tq, hd,
            dscore.as_ptr(), 1, tk as isize,
            unsafe { q.as_ptr().add(off) }, ds, 1,
            0.0,
            unsafe { gk.as_mut_ptr().add(off) }, ds, 1,
        );
    }
    (gq, gk, gv)
}

struct BilinearTap {
    i0: usize,
    j0: usize,
    fx: f64,
    fy: f64,
    dgx: f64,
    dgy: f64,
}

/// Maps uv in [-1,1] to continuous grid coordinates with texel `i` at
/// `-1 + 2 i/(s-1)`; values clamp to the border. `dg` is the derivative of
/// the grid coordinate w.r.t. the uv input (zero where clamped).
fn bilinear_tap(u: f64, v: f64, s: usize) -> BilinearTap {
    let sm1 = (s - 1) as f64;
    let to_grid = |t: f64| -> (f64, f64) {
        let g = (t + 1.0) * 0.5 * sm1;
        if g <= 0.0 {
            (0.0, 0.0)
        } else if g >= sm1 {
            (sm1, 0.0)
        } else {
            (g, 0.5 * sm1)
        }
    };
    let (gx, dgx) = to_grid(u);
    let (gy, dgy) = to_grid(v);
    let j0 = (gx.floor() as usize).min(s - 2);
    let i0 = (gy.floor() as usize).min(s - 2);
    BilinearTap { i0, j0, fx: gx - j0 as f64, fy: gy - i0 as f64, dgx, dgy }
}

pub(crate) fn bilinear_forward(plane: &[f64], c: usize, s: usize, uv: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for p in 0..n {
        let t = bilinear_tap(uv[p * 2], uv[p * 2 + 1], s);
        let w00 = (1.0 - t.fx) * (1.0 - t.fy);
        let w01 = t.fx * (1.0 - t.fy);
        let w10 = (1.0 - t.fx) * t.fy;
        let w11 = t.fx * t.fy;
        let base00 = t.i0 * s + t.j0;
        for ch in 0..c {
            let pl = &plane[ch * s * s..];
            out[p * c + ch] = w00 * pl[base00]
                + w01 * pl[base00 + 1]
                + w10 * pl[base00 + s]
                + w11 * pl[base00 + s + 1];
        }
    }
    out
}

pub(crate) fn bilinear_backward(
    plane: &[f64],
    c: usize,
    s: usize,
    uv: &[f64],
    n: usize,
    gout: &[f64],
    gplane: &mut [f64],
    guv: &mut [f64],
) {
    for p in 0..n {
        let t = bilinear_tap(uv[p * 2], uv[p * 2 + 1], s);
        let w00 = (1.0 - t.fx) * (1.0 - t.fy);
        let w01 = t.fx * (1.0 - t.fy);
        let w10 = (1.0 - t.fx) * t.fy;
        let w11 = t.fx * t.fy;
        let base00 = t.i0 * s + t.j0;
        let mut du = 0.0;
        let mut dv = 0.0;
        for ch in 0..c {
            let g = gout[p * c + ch];
            let po = ch * s * s + base00;
            gplane[po] += g * w00;
            gplane[po + 1] += g * w01;
            gplane[po + s] += g * w10;
            gplane[po + s + 1] += g * w11;
            let pl = &plane[ch * s * s..];
            let v00 = pl[base00];
            let v01 = pl[base00 + 1];
            let v10 = pl[base00 + s];
            let v11 = pl[base00 + s + 1];
            // d/dfx and d/dfy of the interpolated value
            let dfx = (1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
            let dfy = (1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
            du += g * dfx;
            dv += g * dfy;
        }
        guv[p * 2] += du * t.dgx;
        guv[p * 2 + 1] += dv * t.dgy;
    }
}
