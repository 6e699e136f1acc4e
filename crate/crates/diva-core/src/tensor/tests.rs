use super::*;
use crate::error::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Check autodiff against central finite differences for a scalar-valued
/// graph built from a single leaf.
fn grad_check<F>(build: F, x: &Tensor, h: f64, tol: f64)
where
    F: Fn(&mut Graph, Value) -> crate::Result<Value>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone().with_requires_grad());
    let root = build(&mut g, leaf).unwrap();
    g.backward(root).unwrap();
    let analytic = g.grad(leaf).expect("no gradient reached the leaf").to_vec();

    let oracle = finite_diff_grad(
        |probe| {
            let mut g = Graph::new();
            let leaf = g.leaf(probe.clone());
            let root = build(&mut g, leaf)?;
            Ok(g.value(root).data()[0])
        },
        x,
        h,
    )
    .unwrap();

    let err = max_rel_err(&analytic, oracle.data());
    assert!(err < tol, "max rel err {err} >= tol {tol}");
}

// ── matmul ──────────────────────────────────────────────────────────

#[test]
fn matmul_scalar_product() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_vec(vec![1, 1], vec![2.0]).unwrap());
    let b = g.constant(Tensor::from_vec(vec![1, 1], vec![3.0]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[6.0]);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let eye = Tensor::from_vec(
        vec![3, 3],
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    )
    .unwrap();
    let x = Tensor::randn(vec![3, 4], 1.0, &mut rng(1));
    let a = g.constant(eye);
    let b = g.constant(x.clone());
    let c = g.matmul(a, b).unwrap();
    assert!(g.value(c).bitwise_eq(&x));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![4, 2]));
    match g.matmul(a, b) {
        Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![4, 2]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(7);
    let a = Tensor::randn(vec![4, 5], 1.0, &mut r);
    let b = Tensor::randn(vec![5, 2], 1.0, &mut r);

    // grad w.r.t. left operand, sum-of-output root
    let b2 = b.clone();
    grad_check(
        move |g, leaf| {
            let bc = g.constant(b2.clone());
            let c = g.matmul(leaf, bc)?;
            g.sum_all(c)
        },
        &a,
        1e-5,
        1e-6,
    );

    // grad w.r.t. right operand
    let a2 = a.clone();
    grad_check(
        move |g, leaf| {
            let ac = g.constant(a2.clone());
            let c = g.matmul(ac, leaf)?;
            g.sum_all(c)
        },
        &b,
        1e-5,
        1e-6,
    );
}

#[test]
fn matmul_nt_gradient_matches_finite_differences() {
    let mut r = rng(8);
    let a = Tensor::randn(vec![3, 4], 1.0, &mut r);
    let b = Tensor::randn(vec![5, 4], 1.0, &mut r);
    let w = Tensor::randn(vec![3, 5], 1.0, &mut r);

    let (b2, w2) = (b.clone(), w.clone());
    grad_check(
        move |g, leaf| {
            let bc = g.constant(b2.clone());
            let c = g.matmul_nt(leaf, bc)?;
            let wc = g.constant(w2.clone());
            let c = g.mul_elem(c, wc)?;
            g.sum_all(c)
        },
        &a,
        1e-5,
        1e-6,
    );
    let (a2, w2) = (a.clone(), w.clone());
    grad_check(
        move |g, leaf| {
            let ac = g.constant(a2.clone());
            let c = g.matmul_nt(ac, leaf)?;
            let wc = g.constant(w2.clone());
            let c = g.mul_elem(c, wc)?;
            g.sum_all(c)
        },
        &b,
        1e-5,
        1e-6,
    );
}

// ── softmax ─────────────────────────────────────────────────────────

#[test]
fn softmax_uniform_row() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap());
    let y = g.softmax_rows(x).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_large_logits_stay_finite() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(vec![1, 2], vec![1000.0, 0.0]).unwrap());
    let y = g.softmax_rows(x).unwrap();
    let out = g.value(y).data();
    assert!(out.iter().all(|v| v.is_finite()));
    assert!((out[0] - 1.0).abs() < 1e-12);
    assert!(out[1] < 1e-12);
}

#[test]
fn softmax_nan_input_is_numeric_error() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(vec![1, 2], vec![f64::NAN, 0.0]).unwrap());
    assert!(matches!(g.softmax_rows(x), Err(Error::NonFinite(_))));
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let x = Tensor::randn(vec![3, 4], 1.0, &mut rng(9));
    let w = Tensor::randn(vec![3, 4], 1.0, &mut rng(10));
    grad_check(
        move |g, leaf| {
            let y = g.softmax_rows(leaf)?;
            let wc = g.constant(w.clone());
            let y = g.mul_elem(y, wc)?;
            g.sum_all(y)
        },
        &x,
        1e-5,
        1e-6,
    );
}

// ── layer norm ──────────────────────────────────────────────────────

#[test]
fn layer_norm_constant_row_maps_to_zero() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(vec![1, 4], 3.5));
    let gain = g.constant(Tensor::full(vec![4], 1.0));
    let bias = g.constant(Tensor::zeros(vec![4]));
    let y = g.layer_norm(x, gain, bias).unwrap();
    for &v in g.value(y).data() {
        assert!(v.abs() < 1e-12);
    }
}

#[test]
fn layer_norm_already_normalized_row() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(vec![1, 2], vec![1.0, -1.0]).unwrap());
    let gain = g.constant(Tensor::full(vec![2], 1.0));
    let bias = g.constant(Tensor::zeros(vec![2]));
    let y = g.layer_norm(x, gain, bias).unwrap();
    let out = g.value(y).data();
    // variance is exactly 1, so only the epsilon shrinks the row
    assert!((out[0] - 1.0).abs() < 1e-4);
    assert!((out[1] + 1.0).abs() < 1e-4);
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let mut r = rng(11);
    let x = Tensor::randn(vec![2, 8], 1.0, &mut r);
    let gain = Tensor::randn(vec![8], 0.5, &mut r);
    let bias = Tensor::randn(vec![8], 0.5, &mut r);
    let w = Tensor::randn(vec![2, 8], 1.0, &mut r);

    let (g2, b2, w2) = (gain.clone(), bias.clone(), w.clone());
    grad_check(
        move |g, leaf| {
            let gc = g.constant(g2.clone());
            let bc = g.constant(b2.clone());
            let y = g.layer_norm(leaf, gc, bc)?;
            let wc = g.constant(w2.clone());
            let y = g.mul_elem(y, wc)?;
            g.sum_all(y)
        },
        &x,
        1e-5,
        1e-6,
    );

    // w.r.t. gain and bias
    let (x2, b2, w2) = (x.clone(), bias.clone(), w.clone());
    grad_check(
        move |g, leaf| {
            let xc = g.constant(x2.clone());
            let bc = g.constant(b2.clone());
            let y = g.layer_norm(xc, leaf, bc)?;
            let wc = g.constant(w2.clone());
            let y = g.mul_elem(y, wc)?;
            g.sum_all(y)
        },
        &gain,
        1e-5,
        1e-6,
    );
    let (x2, g2, w2) = (x.clone(), gain.clone(), w.clone());
    grad_check(
        move |g, leaf| {
            let xc = g.constant(x2.clone());
            let gc = g.constant(g2.clone());
            let y = g.layer_norm(xc, gc, leaf)?;
            let wc = g.constant(w2.clone());
            let y = g.mul_elem(y, wc)?;
            g.sum_all(y)
        },
        &bias,
        1e-5,
        1e-6,
    );
}

// ── cross entropy ───────────────────────────────────────────────────

#[test]
fn cross_entropy_confident_correct_approaches_zero() {
    let mut g = Graph::new();
    let mut logits = Tensor::zeros(vec![3, 5]);
    let targets = [1u32, 4, 2];
    for (i, &t) in targets.iter().enumerate() {
        logits.data_mut()[i * 5 + t as usize] = 50.0;
    }
    let l = g.constant(logits);
    let loss = g
        .cross_entropy_logits(l, &targets, &[true, true, true])
        .unwrap();
    assert!(g.value(loss).data()[0] < 1e-12);
}

#[test]
fn cross_entropy_uniform_logits_is_ln_vocab() {
    let mut g = Graph::new();
    let l = g.constant(Tensor::zeros(vec![4, 10]));
    let loss = g
        .cross_entropy_logits(l, &[0, 1, 2, 3], &[true; 4])
        .unwrap();
    let expected = (10.0f64).ln(); // 2.302585…
    assert!((g.value(loss).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn cross_entropy_all_masked_is_error() {
    let mut g = Graph::new();
    let l = g.constant(Tensor::zeros(vec![2, 4]));
    assert!(matches!(
        g.cross_entropy_logits(l, &[0, 1], &[false, false]),
        Err(Error::AllMasked)
    ));
}

#[test]
fn cross_entropy_masked_positions_contribute_zero() {
    let mut r = rng(13);
    let full = Tensor::randn(vec![4, 6], 2.0, &mut r);
    let targets = [0u32, 3, 5, 1];
    let mask = [true, false, true, false];

    let mut g = Graph::new();
    let l = g.constant(full.clone());
    let loss_masked = {
        let v = g.cross_entropy_logits(l, &targets, &mask).unwrap();
        g.value(v).data()[0]
    };

    // same loss from only the unmasked rows
    let kept: Vec<f64> = full.row(0).iter().chain(full.row(2)).cloned().collect();
    let sub = Tensor::from_vec(vec![2, 6], kept).unwrap();
    let mut g = Graph::new();
    let l = g.constant(sub);
    let v = g
        .cross_entropy_logits(l, &[targets[0], targets[2]], &[true, true])
        .unwrap();
    assert!((loss_masked - g.value(v).data()[0]).abs() < 1e-15);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let x = Tensor::randn(vec![5, 10], 1.0, &mut rng(12));
    let targets = [3u32, 0, 9, 5, 7];
    let mask = [true, true, false, true, true];
    grad_check(
        move |g, leaf| g.cross_entropy_logits(leaf, &targets, &mask),
        &x,
        1e-5,
        1e-6,
    );
}

// ── other ops ───────────────────────────────────────────────────────

#[test]
fn gelu_gradient_matches_finite_differences() {
    let x = Tensor::randn(vec![2, 6], 1.5, &mut rng(14));
    let w = Tensor::randn(vec![2, 6], 1.0, &mut rng(15));
    grad_check(
        move |g, leaf| {
            let y = g.gelu(leaf)?;
            let wc = g.constant(w.clone());
            let y = g.mul_elem(y, wc)?;
            g.sum_all(y)
        },
        &x,
        1e-5,
        1e-6,
    );
}

#[test]
fn shape_ops_gradients_match_finite_differences() {
    let x = Tensor::randn(vec![4, 6], 1.0, &mut rng(16));
    let w = Tensor::randn(vec![7, 5], 1.0, &mut rng(17));
    // slice rows+cols, concat back, gather
    grad_check(
        move |g, leaf| {
            let top = g.slice_rows(leaf, 0, 2)?;
            let bottom = g.slice_rows(leaf, 2, 2)?;
            let joined = g.concat_rows(&[bottom, top])?;
            let left = g.slice_cols(joined, 0, 3)?;
            let right = g.slice_cols(joined, 3, 3)?;
            let swapped = g.concat_cols(&[right, left])?;
            let picked = g.gather_rows(swapped, &[1, 1, 3, 0, 2, 3, 2])?;
            let pl = g.slice_cols(picked, 0, 5)?;
            let wc = g.constant(w.clone());
            let y = g.mul_elem(pl, wc)?;
            g.sum_all(y)
        },
        &x,
        1e-5,
        1e-6,
    );
}

#[test]
fn scale_by_scalar_gradients_flow_to_both_sides() {
    let x = Tensor::randn(vec![3, 3], 1.0, &mut rng(18));
    let s = Tensor::scalar(0.37);

    let s2 = s.clone();
    grad_check(
        move |g, leaf| {
            let sc = g.constant(s2.clone());
            let y = g.scale_by(leaf, sc)?;
            g.sum_all(y)
        },
        &x,
        1e-5,
        1e-6,
    );
    let x2 = x.clone();
    grad_check(
        move |g, leaf| {
            let xc = g.constant(x2.clone());
            let y = g.scale_by(xc, leaf)?;
            g.sum_all(y)
        },
        &s,
        1e-5,
        1e-6,
    );
}

// ── adam ────────────────────────────────────────────────────────────

#[test]
fn adam_zero_gradient_leaves_params_unchanged() {
    let mut params = ParamSet::new();
    params.insert("w", Tensor::from_vec(vec![2], vec![1.5, -0.5]).unwrap());
    let before = params.get("w").unwrap().clone();
    let mut grads = GradMap::new();
    grads.insert("w".into(), vec![0.0, 0.0]);
    let mut state = AdamState::new(0.1);
    adam_step(&mut params, &grads, &mut state).unwrap();
    assert!(params.get("w").unwrap().bitwise_eq(&before));
}

#[test]
fn adam_descends_on_quadratic() {
    // f(w) = w², f'(1) = 2
    let mut params = ParamSet::new();
    params.insert("w", Tensor::scalar(1.0));
    let mut grads = GradMap::new();
    grads.insert("w".into(), vec![2.0]);
    let mut state = AdamState::new(0.1);
    adam_step(&mut params, &grads, &mut state).unwrap();
    let w = params.get("w").unwrap().data()[0];
    assert!(w < 1.0, "adam moved against the gradient: {w}");
}

#[test]
fn adam_missing_grad_names_the_parameter() {
    let mut params = ParamSet::new();
    params.insert("layer0.g_attn", Tensor::scalar(0.0));
    let grads = GradMap::new();
    let mut state = AdamState::new(0.1);
    match adam_step(&mut params, &grads, &mut state) {
        Err(Error::MissingGrad(name)) => assert_eq!(name, "layer0.g_attn"),
        other => panic!("expected MissingGrad, got {other:?}"),
    }
}

/// Least-squares toy problem with a normal-equations oracle:
/// minimize ‖Aw − b‖²/p. The 2×2 normal system is solved in closed form
/// here, independent of the training path.
#[test]
fn adam_converges_on_least_squares() {
    let mut r = rng(19);
    let p = 8;
    let a = Tensor::randn(vec![p, 2], 1.0, &mut r);
    let b = Tensor::randn(vec![p, 1], 1.0, &mut r);

    // normal equations: (AᵀA) w* = Aᵀ b
    let mut ata = [0.0f64; 4];
    let mut atb = [0.0f64; 2];
    for i in 0..p {
        let (x0, x1) = (a.at(i, 0), a.at(i, 1));
        ata[0] += x0 * x0;
        ata[1] += x0 * x1;
        ata[2] += x1 * x0;
        ata[3] += x1 * x1;
        atb[0] += x0 * b.at(i, 0);
        atb[1] += x1 * b.at(i, 0);
    }
    let det = ata[0] * ata[3] - ata[1] * ata[2];
    let w_star = [
        (ata[3] * atb[0] - ata[1] * atb[1]) / det,
        (-ata[2] * atb[0] + ata[0] * atb[1]) / det,
    ];

    let loss_at = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..p {
            let pred = a.at(i, 0) * w[0] + a.at(i, 1) * w[1];
            let e = pred - b.at(i, 0);
            total += e * e;
        }
        total / p as f64
    };
    let loss_opt = loss_at(&w_star);

    let mut params = ParamSet::new();
    params.insert("w", Tensor::zeros(vec![2, 1]));
    let loss_init = loss_at(&[0.0, 0.0]);
    let mut state = AdamState::new(0.1);
    for _ in 0..200 {
        // analytic gradient of mean squared residual
        let w = params.get("w").unwrap().data().to_vec();
        let mut grad = vec![0.0; 2];
        for i in 0..p {
            let pred = a.at(i, 0) * w[0] + a.at(i, 1) * w[1];
            let e = 2.0 * (pred - b.at(i, 0)) / p as f64;
            grad[0] += e * a.at(i, 0);
            grad[1] += e * a.at(i, 1);
        }
        let mut grads = GradMap::new();
        grads.insert("w".into(), grad);
        adam_step(&mut params, &grads, &mut state).unwrap();
    }
    let w = params.get("w").unwrap().data().to_vec();
    let gap = loss_at(&w) - loss_opt;
    let init_gap = loss_init - loss_opt;
    assert!(
        gap < 1e-3 * init_gap,
        "optimum gap {gap} not closed (init gap {init_gap})"
    );
}

// ── finite differences ──────────────────────────────────────────────

#[test]
fn finite_diff_of_sum_is_ones() {
    let x = Tensor::randn(vec![2, 3], 1.0, &mut rng(20));
    let g = finite_diff_grad(|t| Ok(t.data().iter().sum()), &x, 1e-5).unwrap();
    for &v in g.data() {
        assert!((v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn finite_diff_of_square_at_three() {
    let x = Tensor::scalar(3.0);
    let g = finite_diff_grad(|t| Ok(t.data()[0] * t.data()[0]), &x, 1e-5).unwrap();
    assert!((g.data()[0] - 6.0).abs() < 1e-6);
}

#[test]
fn finite_diff_rejects_non_finite_probe() {
    let x = Tensor::scalar(0.0);
    let res = finite_diff_grad(|t| Ok(1.0 / t.data()[0]), &x, 1e-5);
    assert!(res.is_err() || res.unwrap().data()[0].is_finite());
}

// ── determinism and non-mutation ────────────────────────────────────

#[test]
fn randn_same_seed_is_bitwise_identical() {
    let a = Tensor::randn(vec![5, 5], 0.02, &mut rng(42));
    let b = Tensor::randn(vec![5, 5], 0.02, &mut rng(42));
    assert!(a.bitwise_eq(&b));
}

#[test]
fn ops_do_not_mutate_inputs() {
    let mut r = rng(21);
    let a = Tensor::randn(vec![3, 4], 1.0, &mut r);
    let b = Tensor::randn(vec![4, 2], 1.0, &mut r);
    let (a0, b0) = (a.clone(), b.clone());
    let mut g = Graph::new();
    let av = g.leaf(a.clone().with_requires_grad());
    let bv = g.leaf(b.clone().with_requires_grad());
    let c = g.matmul(av, bv).unwrap();
    let s = g.sum_all(c).unwrap();
    g.backward(s).unwrap();
    assert!(a.bitwise_eq(&a0));
    assert!(b.bitwise_eq(&b0));
}

#[test]
fn forward_is_deterministic_across_runs() {
    let run = || {
        let mut r = rng(77);
        let x = Tensor::randn(vec![4, 8], 1.0, &mut r);
        let w = Tensor::randn(vec![8, 8], 0.02, &mut r);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let wv = g.constant(w);
        let y = g.matmul(xv, wv).unwrap();
        let y = g.softmax_rows(y).unwrap();
        g.value(y).clone()
    };
    assert!(run().bitwise_eq(&run()));
}
