//! Central finite-difference gradient checking used across the workspace's
//! test suites.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Result of a gradient check: worst relative error over all inputs.
#[derive(Debug)]
pub struct CheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares tape gradients of a scalar-valued function against central
/// finite differences with step `h`. `f` receives one leased leaf per input
/// tensor and must return a scalar var.
///
/// Relative error uses `|ad - fd| / max(0.1, |ad|, |fd|)` so that near-zero
/// gradients are compared absolutely at a 10x tighter scale.
pub fn finite_difference_check(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) -> CheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).expect("scalar output");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.numel(*v)]))
        .collect();

    let eval = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t)).collect();
        let out = f(&mut tape, &vars);
        tape.scalar_value(out)
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        for ei in 0..t.numel() {
            let orig = t.data()[ei];
            work[ti].data_mut()[ei] = orig + h;
            let fp = eval(&work);
            work[ti].data_mut()[ei] = orig - h;
            let fm = eval(&work);
            work[ti].data_mut()[ei] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let ad = analytic[ti][ei];
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(0.1);
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }
    CheckReport { max_rel_err: max_rel, checked }
}
