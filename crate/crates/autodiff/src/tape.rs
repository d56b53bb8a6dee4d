use crate::error::{AdError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Recorded operation. Inputs always precede the node that records them,
/// so replaying the node list in reverse visits a valid topological order.
#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[n,k] + [1,k]` row broadcast.
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Neg(Var),
    Exp(Var),
    Ln(Var),
    Abs(Var),
    Recip(Var),
    ClampMin(Var, f64),
    ClampMax(Var, f64),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat { axis: usize, inputs: Vec<Var> },
    Narrow { input: Var, axis: usize, start: usize, len: usize },
    SumAll(Var),
    MeanAll(Var),
    /// Row-wise sum of a rank-2 tensor, `[r,n] -> [r,1]`.
    SumLast(Var),
    /// Exclusive prefix sum along the last axis of a rank-2 tensor.
    CumsumExclusive(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, rstd: Vec<f64> },
    /// Multi-head scaled dot-product attention; stores per-head row
    /// log-sum-exp so the backward pass can recompute attention weights.
    Attention { q: Var, k: Var, v: Var, heads: usize, lse: Vec<f64> },
    /// Bilinear lookup into a `[c,s,s]` plane at `[n,2]` uv positions.
    Bilinear { plane: Var, uv: Var },
    Mse { pred: Var, target: Var },
    L1 { pred: Var, target: Var },
    Bce { p: Var, y: Var },
}

pub(crate) struct Node {
    pub(crate) data: Vec<f64>,
    pub(crate) shape: Vec<usize>,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) op: Op,
    pub(crate) needs_grad: bool,
}

/// Wengert tape: ops are recorded in forward order and replayed in exact
/// reverse order by [`Tape::backward`]. One tape per forward pass; leases
/// parameters by name so gradients can be handed back to an optimizer.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) params: Vec<(String, Var)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: Vec::new() }
    }

    pub(crate) fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { data, shape, grad: None, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Registers a constant leaf; no gradient is tracked.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(data, shape, Op::Leaf, false)
    }

    /// Leases a named parameter onto the tape. The gradient computed for it
    /// is retrieved after backward via [`Tape::param_grads`].
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        let v = self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, true);
        self.params.push((name.to_string(), v));
        v
    }

    /// Leases a tensor as a differentiable leaf without naming it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    /// Scalar value of a `[1]` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.numel(v), 1);
        self.nodes[v.0].data[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape consistent")
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Named parameter gradients accumulated by the last backward pass, in
    /// lease order. Parameters untouched by the loss report zero gradients.
    pub fn param_grads(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|(name, v)| {
                let node = &self.nodes[v.0];
                let g = match &node.grad {
                    Some(g) => g.clone(),
                    None => vec![0.0; node.data.len()],
                };
                (name.clone(), Tensor::new(node.shape.clone(), g).expect("grad shape"))
            })
            .collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Validates that every node value on the tape is finite.
    pub fn validate_finite(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.data.iter().any(|v| !v.is_finite()) {
                return Err(AdError::NonFinite(format!("tape node {i}")));
            }
        }
        Ok(())
    }

    /// Reverse pass from a scalar output, seeding with gradient 1.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.numel(output) != 1 {
            return Err(AdError::Shape("backward requires a scalar output".into()));
        }
        self.backward_seeded(output, &[1.0])
    }

    /// Reverse pass seeded with an explicit output gradient; used to stitch
    /// chunked sub-graphs (e.g. per-view render tapes feeding a shared
    /// reconstruction tape).
    pub fn backward_seeded(&mut self, output: Var, seed: &[f64]) -> Result<()> {
        self.backward_seeded_multi(&[(output, seed)])
    }

    /// Reverse pass seeded at several output vars at once.
    pub fn backward_seeded_multi(&mut self, seeds: &[(Var, &[f64])]) -> Result<()> {
        let mut highest = 0;
        for (output, seed) in seeds {
            if seed.len() != self.numel(*output) {
                return Err(AdError::Shape(format!(
                    "seed length {} does not match output numel {}",
                    seed.len(),
                    self.numel(*output)
                )));
            }
            self.accum_grad(*output, seed.to_vec());
            highest = highest.max(output.0);
        }
        for i in (0..=highest).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            self.step_backward(i);
        }
        Ok(())
    }

    fn accum_grad(&mut self, v: Var, g: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g.iter()) {
                    *a += b;
                }
            }
            None => node.grad = Some(g),
        }
    }

    fn accum_grad_slice(&mut self, v: Var, g: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g.iter()) {
                    *a += b;
                }
            }
            None => node.grad = Some(g.to_vec()),
        }
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn step_backward(&mut self, idx: usize) {
        // Take the gradient out to appease the borrow checker; it is not
        // needed on the node again afterwards except for leaf reporting,
        // so it is restored at the end.
        let grad = self.nodes[idx].grad.take().expect("grad present");
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.accum_grad_slice(a, &grad);
                self.accum_grad_slice(b, &grad);
            }
            &Op::Sub(a, b) => {
                self.accum_grad_slice(a, &grad);
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                self.accum_grad(b, neg);
            }
            &Op::Mul(a, b) => {
                if self.needs_grad(a) {
                    let ga: Vec<f64> =
                        grad.iter().zip(self.nodes[b.0].data.iter()).map(|(g, y)| g * y).collect();
                    self.accum_grad(a, ga);
                }
                if self.needs_grad(b) {
                    let gb: Vec<f64> =
                        grad.iter().zip(self.nodes[a.0].data.iter()).map(|(g, x)| g * x).collect();
                    self.accum_grad(b, gb);
                }
            }
            &Op::AddRow(a, row) => {
                self.accum_grad_slice(a, &grad);
                if self.needs_grad(row) {
                    let k = self.nodes[row.0].data.len();
                    let mut gr = vec![0.0; k];
                    for chunk in grad.chunks_exact(k) {
                        for (g, c) in gr.iter_mut().zip(chunk.iter()) {
                            *g += c;
                        }
                    }
                    self.accum_grad(row, gr);
                }
            }
            &Op::Scale(a, s) => {
                let ga: Vec<f64> = grad.iter().map(|g| g * s).collect();
                self.accum_grad(a, ga);
            }
            &Op::AddScalar(a) => {
                self.accum_grad_slice(a, &grad);
            }
            &Op::Neg(a) => {
                let ga: Vec<f64> = grad.iter().map(|g| -g).collect();
                self.accum_grad(a, ga);
            }
            &Op::Exp(a) => {
                let ga: Vec<f64> =
                    grad.iter().zip(self.nodes[idx].data.iter()).map(|(g, y)| g * y).collect();
                self.accum_grad(a, ga);
            }
            &Op::Ln(a) => {
                let ga: Vec<f64> =
                    grad.iter().zip(self.nodes[a.0].data.iter()).map(|(g, x)| g / x).collect();
                self.accum_grad(a, ga);
            }
            &Op::Abs(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| g * if *x > 0.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 })
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Recip(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| -g / (x * x))
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::ClampMin(a, m) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| if *x > m { *g } else { 0.0 })
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::ClampMax(a, m) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| if *x < m { *g } else { 0.0 })
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Relu(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Gelu(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| g * crate::ops::gelu_deriv(*x))
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Sigmoid(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[idx].data.iter())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Softplus(a) => {
                let ga: Vec<f64> = grad
                    .iter()
                    .zip(self.nodes[a.0].data.iter())
                    .map(|(g, x)| g * crate::ops::sigmoid_scalar(*x))
                    .collect();
                self.accum_grad(a, ga);
            }
            &Op::Matmul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.needs_grad(a) {
                    // dA = G * B^T
                    let mut ga = vec![0.0; m * k];
                    crate::ops::dgemm_nt(m, n, k, &grad, &self.nodes[b.0].data, &mut ga);
                    self.accum_grad(a, ga);
                }
                if self.needs_grad(b) {
                    // dB = A^T * G
                    let mut gb = vec![0.0; k * n];
                    crate::ops::dgemm_tn(k, m, n, &self.nodes[a.0].data, &grad, &mut gb);
                    self.accum_grad(b, gb);
                }
            }
            &Op::Transpose(a) => {
                let (r, c) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = grad[i * c + j];
                    }
                }
                self.accum_grad(a, ga);
            }
            &Op::Reshape(a) => {
                self.accum_grad_slice(a, &grad);
            }
            Op::Concat { axis, inputs } => {
                let axis = *axis;
                let inputs = inputs.clone();
                if axis == 0 {
                    let mut offset = 0;
                    for v in inputs {
                        let n = self.nodes[v.0].data.len();
                        let piece = grad[offset..offset + n].to_vec();
                        offset += n;
                        self.accum_grad(v, piece);
                    }
                } else {
                    let rows = self.nodes[idx].shape[0];
                    let total_cols = self.nodes[idx].shape[1];
                    let mut col_off = 0;
                    for v in inputs {
                        let c = self.nodes[v.0].shape[1];
                        if self.needs_grad(v) {
                            let mut piece = vec![0.0; rows * c];
                            for r in 0..rows {
                                piece[r * c..(r + 1) * c].copy_from_slice(
                                    &grad[r * total_cols + col_off..r * total_cols + col_off + c],
                                );
                            }
                            self.accum_grad(v, piece);
                        }
                        col_off += c;
                    }
                }
            }
            &Op::Narrow { input, axis, start, len } => {
                if self.needs_grad(input) {
                    let ishape = &self.nodes[input.0].shape;
                    let mut gi = vec![0.0; self.nodes[input.0].data.len()];
                    if axis == 0 {
                        let row: usize = ishape[1..].iter().product();
                        gi[start * row..(start + len) * row].copy_from_slice(&grad);
                    } else {
                        let (rows, cols) = (ishape[0], ishape[1]);
                        for r in 0..rows {
                            gi[r * cols + start..r * cols + start + len]
                                .copy_from_slice(&grad[r * len..(r + 1) * len]);
                        }
                    }
                    self.accum_grad(input, gi);
                }
            }
            &Op::SumAll(a) => {
                let g = grad[0];
                let ga = vec![g; self.nodes[a.0].data.len()];
                self.accum_grad(a, ga);
            }
            &Op::MeanAll(a) => {
                let n = self.nodes[a.0].data.len();
                let g = grad[0] / n as f64;
                self.accum_grad(a, vec![g; n]);
            }
            &Op::SumLast(a) => {
                let (rows, cols) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    let g = grad[r];
                    for x in ga[r * cols..(r + 1) * cols].iter_mut() {
                        *x = g;
                    }
                }
                self.accum_grad(a, ga);
            }
            &Op::CumsumExclusive(a) => {
                // out[r,i] = sum_{j<i} x[r,j]  =>  dx[r,j] = sum_{i>j} g[r,i]
                let (rows, cols) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    let mut acc = 0.0;
                    for j in (0..cols).rev() {
                        ga[r * cols + j] = acc;
                        acc += grad[r * cols + j];
                    }
                }
                self.accum_grad(a, ga);
            }
            &Op::SoftmaxRows(a) => {
                let (rows, cols) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                let y = &self.nodes[idx].data;
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &grad[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(y, g)| y * g).sum();
                    for j in 0..cols {
                        ga[r * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accum_grad(a, ga);
            }
            Op::LayerNorm { x, gamma, beta, mean, rstd, .. } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (mean, rstd) = (mean.clone(), rstd.clone());
                let (rows, cols) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                let xd = &self.nodes[x.0].data;
                let gd = &self.nodes[gamma.0].data;
                let mut gx = vec![0.0; rows * cols];
                let mut ggamma = vec![0.0; cols];
                let mut gbeta = vec![0.0; cols];
                for r in 0..rows {
                    let xr = &xd[r * cols..(r + 1) * cols];
                    let gr = &grad[r * cols..(r + 1) * cols];
                    let (mu, rs) = (mean[r], rstd[r]);
                    if rs == 0.0 {
                        // Zero-variance row: output was beta exactly.
                        for j in 0..cols {
                            gbeta[j] += gr[j];
                        }
                        continue;
                    }
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..cols {
                        let xhat = (xr[j] - mu) * rs;
                        let dxhat = gr[j] * gd[j];
                        ggamma[j] += gr[j] * xhat;
                        gbeta[j] += gr[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    let inv_n = 1.0 / cols as f64;
                    for j in 0..cols {
                        let xhat = (xr[j] - mu) * rs;
                        let dxhat = gr[j] * gd[j];
                        gx[r * cols + j] =
                            rs * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
                    }
                }
                self.accum_grad(x, gx);
                self.accum_grad(gamma, ggamma);
                self.accum_grad(beta, gbeta);
            }
            Op::Attention { q, k, v, heads, lse } => {
                let (q, k, v, heads) = (*q, *k, *v, *heads);
                let lse = lse.clone();
                let (gq, gk, gv) = crate::ops::attention_backward(
                    &self.nodes[q.0].data,
                    self.nodes[q.0].shape[0],
                    &self.nodes[k.0].data,
                    self.nodes[k.0].shape[0],
                    &self.nodes[v.0].data,
                    self.nodes[q.0].shape[1],
                    heads,
                    &lse,
                    &grad,
                );
                self.accum_grad(q, gq);
                self.accum_grad(k, gk);
                self.accum_grad(v, gv);
            }
            &Op::Bilinear { plane, uv } => {
                let pshape = self.nodes[plane.0].shape.clone();
                let (c, s) = (pshape[0], pshape[1]);
                let n = self.nodes[uv.0].shape[0];
                let uvd = &self.nodes[uv.0].data;
                let pd = &self.nodes[plane.0].data;
                let mut gplane = vec![0.0; pd.len()];
                let mut guv = vec![0.0; n * 2];
                crate::ops::bilinear_backward(pd, c, s, uvd, n, &grad, &mut gplane, &mut guv);
                self.accum_grad(plane, gplane);
                self.accum_grad(uv, guv);
            }
            &Op::Mse { pred, target } => {
                let n = self.nodes[pred.0].data.len() as f64;
                let g = grad[0];
                if self.needs_grad(pred) {
                    let gp: Vec<f64> = self.nodes[pred.0]
                        .data
                        .iter()
                        .zip(self.nodes[target.0].data.iter())
                        .map(|(p, t)| g * 2.0 * (p - t) / n)
                        .collect();
                    self.accum_grad(pred, gp);
                }
                if self.needs_grad(target) {
                    let gt: Vec<f64> = self.nodes[pred.0]
                        .data
                        .iter()
                        .zip(self.nodes[target.0].data.iter())
                        .map(|(p, t)| g * -2.0 * (p - t) / n)
                        .collect();
                    self.accum_grad(target, gt);
                }
            }
            &Op::L1 { pred, target } => {
                let n = self.nodes[pred.0].data.len() as f64;
                let g = grad[0];
                let sgn = |d: f64| {
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                if self.needs_grad(pred) {
                    let gp: Vec<f64> = self.nodes[pred.0]
                        .data
                        .iter()
                        .zip(self.nodes[target.0].data.iter())
                        .map(|(p, t)| g * sgn(p - t) / n)
                        .collect();
                    self.accum_grad(pred, gp);
                }
                if self.needs_grad(target) {
                    let gt: Vec<f64> = self.nodes[pred.0]
                        .data
                        .iter()
                        .zip(self.nodes[target.0].data.iter())
                        .map(|(p, t)| g * -sgn(p - t) / n)
                        .collect();
                    self.accum_grad(target, gt);
                }
            }
            &Op::Bce { p, y } => {
                let n = self.nodes[p.0].data.len() as f64;
                let g = grad[0];
                let lo = crate::ops::BCE_CLAMP;
                let hi = 1.0 - crate::ops::BCE_CLAMP;
                if self.needs_grad(p) {
                    let gp: Vec<f64> = self.nodes[p.0]
                        .data
                        .iter()
                        .zip(self.nodes[y.0].data.iter())
                        .map(|(&pv, &yv)| {
                            if pv <= lo || pv >= hi {
                                0.0
                            } else {
                                g * (-yv / pv + (1.0 - yv) / (1.0 - pv)) / n
                            }
                        })
                        .collect();
                    self.accum_grad(p, gp);
                }
                if self.needs_grad(y) {
                    let gy: Vec<f64> = self.nodes[p.0]
                        .data
                        .iter()
                        .map(|&pv| {
                            let pc = pv.clamp(lo, hi);
                            g * (-(pc.ln()) + (1.0 - pc).ln()) / n
                        })
                        .collect();
                    self.accum_grad(y, gy);
                }
            }
        }
        self.nodes[idx].grad = Some(grad);
    }
}
