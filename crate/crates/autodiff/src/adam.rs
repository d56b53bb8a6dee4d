use crate::error::{AdError, Result};
use crate::params::{GradMap, ParamSet};
use crate::tensor::Tensor;

/// Adam with bias correction. State tensors are kept per parameter name and
/// shape-checked against the parameters on every step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let m = params.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        let v = params.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        Adam { lr, beta1, beta2, eps, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient entry are left
    /// untouched (their moments do not advance either, matching a sparse
    /// accumulation scheme where absent means exactly-zero contribution
    /// from a frozen or unused branch).
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradMap) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for (i, name) in names.iter().enumerate() {
            let Some(g) = grads.get(name) else { continue };
            let p = params.get_mut(name).expect("name from iteration");
            if g.shape() != p.shape() {
                return Err(AdError::Shape(format!(
                    "adam: gradient shape {:?} vs parameter shape {:?} for '{name}'",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            let gd = g.data();
            for j in 0..pd.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gd[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gd[j] * gd[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                pd[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
