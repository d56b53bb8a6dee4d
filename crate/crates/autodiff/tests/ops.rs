use autodiff::check::finite_difference_check;
use autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randn(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-10..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let b = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let i = tape.constant(&eye);
    let bv = tape.constant(&b);
    let c = tape.matmul(i, bv).unwrap();
    assert_eq!(tape.value(c), b.data());
}

#[test]
fn matmul_hand_arithmetic() {
    let mut tape = Tape::new();
    let a = tape.constant(&Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap());
    let b = tape.constant(&Tensor::new(vec![2, 1], vec![1., 1.]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_error() {
    let mut tape = Tape::new();
    let a = tape.constant(&Tensor::zeros(vec![2, 3]));
    let b = tape.constant(&Tensor::zeros(vec![2, 2]));
    assert!(tape.matmul(a, b).is_err());
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = randn(&mut rng, vec![3, 4]);
    let b = randn(&mut rng, vec![4, 2]);
    let report = finite_difference_check(&[a, b], 1e-6, |tape, vars| {
        let c = tape.matmul(vars[0], vars[1]).unwrap();
        tape.sum_all(c)
    });
    assert!(report.max_rel_err <= 1e-6, "rel err {}", report.max_rel_err);
}

#[test]
fn layer_norm_constant_row_outputs_beta() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::full(vec![2, 4], 3.25));
    let gamma = tape.constant(&Tensor::full(vec![4], 1.0));
    let beta = tape.constant(&Tensor::zeros(vec![4]));
    let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
    assert!(tape.value(y).iter().all(|v| *v == 0.0));
}

#[test]
fn layer_norm_two_point_row() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap());
    let gamma = tape.constant(&Tensor::full(vec![2], 1.0));
    let beta = tape.constant(&Tensor::zeros(vec![2]));
    let y = tape.layer_norm(x, gamma, beta, 1e-12).unwrap();
    assert!((tape.value(y)[0] + 1.0).abs() < 1e-5);
    assert!((tape.value(y)[1] - 1.0).abs() < 1e-5);
}

#[test]
fn layer_norm_rejects_narrow_rows() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::zeros(vec![3, 1]));
    let gamma = tape.constant(&Tensor::full(vec![1], 1.0));
    let beta = tape.constant(&Tensor::zeros(vec![1]));
    assert!(tape.layer_norm(x, gamma, beta, 1e-5).is_err());
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = randn(&mut rng, vec![3, 6]);
    let gamma = randn(&mut rng, vec![6]);
    let beta = randn(&mut rng, vec![6]);
    let report = finite_difference_check(&[x, gamma, beta], 1e-6, |tape, vars| {
        let y = tape.layer_norm(vars[0], vars[1], vars[2], 1e-8).unwrap();
        // Weighted sum exercises off-diagonal terms of the Jacobian.
        let w = tape.constant_from(vec![3, 6], (0..18).map(|i| (i as f64) * 0.1 - 0.4).collect());
        let p = tape.mul(y, w).unwrap();
        tape.sum_all(p)
    });
    assert!(report.max_rel_err <= 1e-5, "rel err {}", report.max_rel_err);
}

#[test]
fn attention_single_key_returns_value_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::new();
    let q = tape.constant(&randn(&mut rng, vec![5, 8]));
    let k = tape.constant(&randn(&mut rng, vec![1, 8]));
    let vt = randn(&mut rng, vec![1, 8]);
    let v = tape.constant(&vt);
    let out = tape.attention(q, k, v, 2).unwrap();
    for row in tape.value(out).chunks_exact(8) {
        for (a, b) in row.iter().zip(vt.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_identical_keys_average_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::new();
    let q = tape.constant(&randn(&mut rng, vec![2, 4]));
    let krow = randn(&mut rng, vec![1, 4]);
    let mut kdata = krow.data().to_vec();
    kdata.extend_from_slice(krow.data());
    kdata.extend_from_slice(krow.data());
    let k = tape.constant(&Tensor::new(vec![3, 4], kdata).unwrap());
    let vt = randn(&mut rng, vec![3, 4]);
    let v = tape.constant(&vt);
    let out = tape.attention(q, k, v, 1).unwrap();
    let mean: Vec<f64> = (0..4)
        .map(|j| (vt.data()[j] + vt.data()[4 + j] + vt.data()[8 + j]) / 3.0)
        .collect();
    for row in tape.value(out).chunks_exact(4) {
        for (a, b) in row.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_head_divisibility_error() {
    let mut tape = Tape::new();
    let q = tape.constant(&Tensor::zeros(vec![2, 6]));
    let k = tape.constant(&Tensor::zeros(vec![2, 6]));
    let v = tape.constant(&Tensor::zeros(vec![2, 6]));
    assert!(tape.attention(q, k, v, 4).is_err());
}

#[test]
fn attention_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = randn(&mut rng, vec![4, 8]);
    let k = randn(&mut rng, vec![4, 8]);
    let v = randn(&mut rng, vec![4, 8]);
    let report = finite_difference_check(&[q, k, v], 1e-6, |tape, vars| {
        let out = tape.attention(vars[0], vars[1], vars[2], 2).unwrap();
        let w = tape.constant_from(vec![4, 8], (0..32).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect());
        let p = tape.mul(out, w).unwrap();
        tape.sum_all(p)
    });
    assert!(report.max_rel_err <= 1e-5, "rel err {}", report.max_rel_err);
}

#[test]
fn bce_at_half_is_ln2() {
    for y in [0.0, 1.0] {
        let mut tape = Tape::new();
        let p = tape.constant(&Tensor::full(vec![4], 0.5));
        let yv = tape.constant(&Tensor::full(vec![4], y));
        let loss = tape.bce(p, yv).unwrap();
        assert!((tape.scalar_value(loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }
}

#[test]
fn bce_survives_exact_zero_one_inputs() {
    let mut tape = Tape::new();
    let p = tape.constant(&Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
    let y = tape.constant(&Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
    let loss = tape.bce(p, y).unwrap();
    assert!(tape.scalar_value(loss).is_finite());
}

#[test]
fn softplus_at_zero_is_ln2() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::scalar(0.0));
    let y = tape.softplus(x);
    assert!((tape.value(y)[0] - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn mse_identity_is_zero_with_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = randn(&mut rng, vec![3, 3]);
    let mut tape = Tape::new();
    let a = tape.leaf(&x);
    let b = tape.constant(&x);
    let loss = tape.mse(a, b).unwrap();
    assert_eq!(tape.scalar_value(loss), 0.0);
    tape.backward(loss).unwrap();
    assert!(tape.grad(a).unwrap().iter().all(|g| *g == 0.0));
}

#[test]
fn pointwise_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Offset away from relu/abs kinks.
    let mut x = randn(&mut rng, vec![2, 5]);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.2;
        }
    }
    type OpFn = fn(&mut Tape, Var) -> Var;
    let cases: Vec<(&str, OpFn)> = vec![
        ("relu", |t, v| t.relu(v)),
        ("gelu", |t, v| t.gelu(v)),
        ("sigmoid", |t, v| t.sigmoid(v)),
        ("softplus", |t, v| t.softplus(v)),
        ("exp", |t, v| t.exp(v)),
        ("abs", |t, v| t.abs(v)),
        ("neg", |t, v| t.neg(v)),
    ];
    for (name, op) in cases {
        let report = finite_difference_check(std::slice::from_ref(&x), 1e-6, |tape, vars| {
            let y = op(tape, vars[0]);
            let sq = tape.mul(y, y).unwrap();
            tape.sum_all(sq)
        });
        assert!(report.max_rel_err <= 1e-4, "{name}: rel err {}", report.max_rel_err);
    }
}

#[test]
fn structural_op_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = randn(&mut rng, vec![3, 4]);
    let b = randn(&mut rng, vec![3, 2]);
    let report = finite_difference_check(&[a, b], 1e-6, |tape, vars| {
        let cat = tape.concat(1, &[vars[0], vars[1]]).unwrap();
        let nar = tape.narrow(cat, 1, 1, 4).unwrap();
        let tr = tape.transpose(nar).unwrap();
        let rs = tape.reshape(tr, vec![2, 6]).unwrap();
        let cs = tape.cumsum_exclusive(rs).unwrap();
        let sl = tape.sum_last(cs).unwrap();
        let sm = tape.softmax_rows(sl).unwrap();
        tape.mean_all(sm)
    });
    assert!(report.max_rel_err <= 1e-4, "rel err {}", report.max_rel_err);
}

#[test]
fn bilinear_constant_plane_everywhere_constant() {
    let mut tape = Tape::new();
    let plane = tape.constant(&Tensor::full(vec![2, 4, 4], 3.5));
    let uv = tape.constant(
        &Tensor::new(vec![3, 2], vec![-1.0, -1.0, 0.13, -0.77, 0.99, 0.42]).unwrap(),
    );
    let out = tape.bilinear_sample(plane, uv).unwrap();
    for v in tape.value(out) {
        assert!((v - 3.5).abs() < 1e-12);
    }
}

#[test]
fn bilinear_texel_center_exact() {
    let s = 5usize;
    let mut data = vec![0.0; s * s];
    for (i, v) in data.iter_mut().enumerate() {
        *v = i as f64;
    }
    let mut tape = Tape::new();
    let plane = tape.constant(&Tensor::new(vec![1, s, s], data).unwrap());
    // Texel (row 2, col 3) center in uv coordinates.
    let u = -1.0 + 2.0 * 3.0 / (s as f64 - 1.0);
    let v = -1.0 + 2.0 * 2.0 / (s as f64 - 1.0);
    let uv = tape.constant(&Tensor::new(vec![1, 2], vec![u, v]).unwrap());
    let out = tape.bilinear_sample(plane, uv).unwrap();
    assert!((tape.value(out)[0] - 13.0).abs() < 1e-12);
}

#[test]
fn bilinear_out_of_range_clamps() {
    let mut tape = Tape::new();
    let mut data = vec![0.0; 9];
    data[8] = 7.0; // bottom-right texel
    let plane = tape.constant(&Tensor::new(vec![1, 3, 3], data).unwrap());
    let uv = tape.constant(&Tensor::new(vec![1, 2], vec![5.0, 5.0]).unwrap());
    let out = tape.bilinear_sample(plane, uv).unwrap();
    assert!((tape.value(out)[0] - 7.0).abs() < 1e-12);
}

#[test]
fn bilinear_rejects_tiny_planes() {
    let mut tape = Tape::new();
    let plane = tape.constant(&Tensor::zeros(vec![1, 1, 1]));
    let uv = tape.constant(&Tensor::zeros(vec![1, 2]));
    assert!(tape.bilinear_sample(plane, uv).is_err());
}

#[test]
fn bilinear_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let plane = randn(&mut rng, vec![3, 6, 6]);
    // uv away from texel boundaries so central differences stay one-sided-free.
    let uv = Tensor::new(
        vec![4, 2],
        vec![-0.63, 0.21, 0.17, -0.45, 0.52, 0.61, -0.09, -0.88],
    )
    .unwrap();
    let report = finite_difference_check(&[plane, uv], 1e-6, |tape, vars| {
        let out = tape.bilinear_sample(vars[0], vars[1]).unwrap();
        let sq = tape.mul(out, out).unwrap();
        tape.sum_all(sq)
    });
    assert!(report.max_rel_err <= 1e-4, "rel err {}", report.max_rel_err);
}

#[test]
fn chain_rule_composition_matches_manual_product() {
    // f(g(x)) with scalar output on randomized small graphs: the tape
    // gradient must equal the manual chain-rule composition.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let x = randn(&mut rng, vec![4]);
        let w = randn(&mut rng, vec![4]);
        // g(x) = sigmoid(w * x) elementwise; f(g) = sum(g^2)
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let wv = tape.constant(&w);
        let wx = tape.mul(xv, wv).unwrap();
        let g = tape.sigmoid(wx);
        let g2 = tape.mul(g, g).unwrap();
        let f = tape.sum_all(g2);
        tape.backward(f).unwrap();
        let got = tape.grad(xv).unwrap();
        for i in 0..4 {
            let s = 1.0 / (1.0 + (-w.data()[i] * x.data()[i]).exp());
            let manual = 2.0 * s * s * (1.0 - s) * w.data()[i];
            assert!((got[i] - manual).abs() <= 1e-12 * manual.abs().max(1.0));
        }
    }
}

#[test]
fn forward_backward_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = randn(&mut rng, vec![8, 8]);
    let b = randn(&mut rng, vec![8, 8]);
    let run = || {
        let mut tape = Tape::new();
        let av = tape.leaf(&a);
        let bv = tape.constant(&b);
        let c = tape.matmul(av, bv).unwrap();
        let at = tape.attention(c, c, c, 2).unwrap();
        let g1 = tape.constant(&Tensor::full(vec![8], 1.0));
        let b1 = tape.constant(&Tensor::zeros(vec![8]));
        let ln = tape.layer_norm(at, g1, b1, 1e-6).unwrap();
        let loss = tape.mean_all(ln);
        tape.backward(loss).unwrap();
        (tape.value(loss)[0].to_bits(), tape.grad(av).unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
}

#[test]
fn backward_seeded_stitches_subgraphs() {
    // d/dx of h(g(x)) computed in two stages must equal the single-tape result.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = randn(&mut rng, vec![3, 3]);

    let mut single = Tape::new();
    let xv = single.leaf(&x);
    let g = single.sigmoid(xv);
    let g2 = single.mul(g, g).unwrap();
    let loss = single.sum_all(g2);
    single.backward(loss).unwrap();
    let want = single.grad(xv).unwrap().to_vec();

    let mut first = Tape::new();
    let xv1 = first.leaf(&x);
    let g1 = first.sigmoid(xv1);
    let mid = first.to_tensor(g1);

    let mut second = Tape::new();
    let gv = second.leaf(&mid);
    let sq = second.mul(gv, gv).unwrap();
    let loss2 = second.sum_all(sq);
    second.backward(loss2).unwrap();
    let seed = second.grad(gv).unwrap().to_vec();

    first.backward_seeded(g1, &seed).unwrap();
    let got = first.grad(xv1).unwrap();
    for (a, b) in got.iter().zip(want.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
}
