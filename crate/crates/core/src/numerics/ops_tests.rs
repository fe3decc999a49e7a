//! Op-level examples and backward-rule checks.

use rand::Rng;

use crate::numerics::ops::{concat_cols, concat_rows};
use crate::numerics::{grad_check, rng, Node, ParameterSet, Tensor};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Independent triple-loop product used as the matmul oracle.
fn matmul_naive(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

#[test]
fn matmul_2x2_known_product() {
    let a = Node::leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = Node::leaf(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap());
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.value().data(), &[19.0, 22.0, 43.0, 50.0]);
}

#[test]
fn matmul_identity_and_zero() {
    let mut r = rng::seeded(3, rng::STREAM_INIT);
    let data: Vec<f64> = (0..12).map(|_| r.gen_range(-2.0..2.0)).collect();
    let a = Node::leaf(Tensor::matrix(3, 4, data.clone()).unwrap());
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 4 + i] = 1.0;
    }
    let i4 = Node::leaf(Tensor::matrix(4, 4, eye).unwrap());
    let out = a.matmul(&i4).unwrap();
    assert_eq!(out.value().data(), data.as_slice());

    let z = Node::leaf(Tensor::zeros(vec![4, 2]));
    let out = a.matmul(&z).unwrap();
    assert!(out.value().data().iter().all(|&x| x == 0.0));
}

#[test]
fn matmul_matches_naive_oracle_on_integer_matrices() {
    let mut r = rng::seeded(11, rng::STREAM_INIT);
    for _ in 0..20 {
        let m = r.gen_range(1..=8);
        let k = r.gen_range(1..=8);
        let n = r.gen_range(1..=8);
        let ad: Vec<f64> = (0..m * k).map(|_| r.gen_range(-5..=5) as f64).collect();
        let bd: Vec<f64> = (0..k * n).map(|_| r.gen_range(-5..=5) as f64).collect();
        let at = Tensor::matrix(m, k, ad).unwrap();
        let bt = Tensor::matrix(k, n, bd).unwrap();
        let expected = matmul_naive(&at, &bt);
        let got = Node::leaf(at).matmul(&Node::leaf(bt)).unwrap();
        assert_eq!(got.value().data(), expected.as_slice());
    }
}

#[test]
fn matmul_shape_mismatch_rejected() {
    let a = Node::leaf(Tensor::zeros(vec![2, 3]));
    let b = Node::leaf(Tensor::zeros(vec![2, 3]));
    assert!(a.matmul(&b).is_err());
}

#[test]
fn softmax_uniform_and_shifted() {
    let x = Node::leaf(Tensor::vector(vec![0.0, 0.0]));
    let y = x.softmax(0).unwrap();
    assert_eq!(y.value().data(), &[0.5, 0.5]);

    let big = Node::leaf(Tensor::vector(vec![1000.0, 1000.0]));
    let y = big.softmax(0).unwrap();
    assert!(y.value().all_finite());
    assert_eq!(y.value().data(), &[0.5, 0.5]);
}

#[test]
fn softmax_quarter_three_quarters() {
    let x = Node::leaf(Tensor::vector(vec![0.0, 3.0f64.ln()]));
    let y = x.softmax(0).unwrap();
    assert!(close(y.value().data()[0], 0.25, 1e-12));
    assert!(close(y.value().data()[1], 0.75, 1e-12));
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut r = rng::seeded(5, rng::STREAM_INIT);
    let data: Vec<f64> = (0..12).map(|_| r.gen_range(-3.0..3.0)).collect();
    let x = Node::leaf(Tensor::matrix(3, 4, data.clone()).unwrap());
    let y = x.softmax(1).unwrap();
    for i in 0..3 {
        let s: f64 = y.value().data()[i * 4..(i + 1) * 4].iter().sum();
        assert!(close(s, 1.0, 1e-6));
    }
    let shifted: Vec<f64> = data.iter().map(|v| v + 17.5).collect();
    let ys = Node::leaf(Tensor::matrix(3, 4, shifted).unwrap())
        .softmax(1)
        .unwrap();
    assert!(y.value().max_abs_diff(&ys.value()) < 1e-9);
}

#[test]
fn layer_norm_constant_row_returns_beta() {
    let x = Node::leaf(Tensor::matrix(1, 3, vec![4.0, 4.0, 4.0]).unwrap());
    let gamma = Node::leaf(Tensor::vector(vec![2.0, 3.0, 4.0]));
    let beta = Node::leaf(Tensor::vector(vec![-1.0, 0.5, 9.0]));
    let y = x.layer_norm(&gamma, &beta, 1e-5).unwrap();
    assert!(y.value().max_abs_diff(&Tensor::matrix(1, 3, vec![-1.0, 0.5, 9.0]).unwrap()) < 1e-9);
}

#[test]
fn layer_norm_unit_pair() {
    let x = Node::leaf(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap());
    let gamma = Node::leaf(Tensor::ones(vec![2]));
    let beta = Node::leaf(Tensor::zeros(vec![2]));
    let y = x.layer_norm(&gamma, &beta, 0.0).unwrap();
    assert!(close(y.value().data()[0], 1.0, 1e-12));
    assert!(close(y.value().data()[1], -1.0, 1e-12));
}

#[test]
fn layer_norm_output_mean_is_beta() {
    let mut r = rng::seeded(9, rng::STREAM_INIT);
    let data: Vec<f64> = (0..8).map(|_| r.gen_range(-10.0..10.0)).collect();
    let x = Node::leaf(Tensor::matrix(2, 4, data).unwrap());
    let gamma = Node::leaf(Tensor::ones(vec![4]));
    let beta = Node::leaf(Tensor::full(vec![4], 0.25));
    let y = x.layer_norm(&gamma, &beta, 1e-5).unwrap();
    for i in 0..2 {
        let mean: f64 = y.value().data()[i * 4..(i + 1) * 4].iter().sum::<f64>() / 4.0;
        assert!(close(mean, 0.25, 1e-9));
    }
}

#[test]
fn conv1d_identity_kernel() {
    let x = Node::leaf(Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let k = Node::leaf(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
    let y = x.conv1d(&k, 1).unwrap();
    assert_eq!(y.value().data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn conv1d_window_selectors() {
    let x = Node::leaf(Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let first = Node::leaf(Tensor::new(vec![2, 1, 1], vec![1.0, 0.0]).unwrap());
    let y = x.conv1d(&first, 1).unwrap();
    assert_eq!(y.value().data(), &[1.0, 2.0, 3.0]);

    let second = Node::leaf(Tensor::new(vec![2, 1, 1], vec![0.0, 1.0]).unwrap());
    let y = x.conv1d(&second, 1).unwrap();
    assert_eq!(y.value().data(), &[2.0, 3.0, 4.0]);
}

#[test]
fn conv1d_window_larger_than_input_rejected() {
    let x = Node::leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
    let k = Node::leaf(Tensor::new(vec![3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap());
    assert!(x.conv1d(&k, 1).is_err());
}

#[test]
fn max_pool_picks_column_max() {
    let x = Node::leaf(Tensor::matrix(3, 1, vec![1.0, 5.0, 3.0]).unwrap());
    let y = x.max_pool1d().unwrap();
    assert_eq!(y.value().data(), &[5.0]);

    let single = Node::leaf(Tensor::matrix(1, 2, vec![7.0, -2.0]).unwrap());
    let y = single.max_pool1d().unwrap();
    assert_eq!(y.value().data(), &[7.0, -2.0]);
}

#[test]
fn max_pool_tie_routes_gradient_to_first_row() {
    let x = Node::leaf(Tensor::matrix(3, 1, vec![2.0, 2.0, 2.0]).unwrap());
    let loss = x.max_pool1d().unwrap().sum();
    loss.backward().unwrap();
    assert_eq!(x.grad_clone().data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn activation_reference_values() {
    let x = Node::leaf(Tensor::vector(vec![0.0, -2.0, 3.0, 2.0]));
    assert!(close(x.sigmoid().value().data()[0], 0.5, 1e-12));
    assert!(close(x.tanh_act().value().data()[0], 0.0, 1e-12));
    let r = x.relu();
    assert_eq!(r.value().data()[1], 0.0);
    assert_eq!(r.value().data()[2], 3.0);
    let g = x.gelu();
    assert!(close(g.value().data()[0], 0.0, 1e-12));
    assert!(close(g.value().data()[3], 1.9546, 5e-5));
}

#[test]
fn cross_entropy_uniform_is_ln2() {
    let logits = Node::leaf(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
    let loss = logits.cross_entropy(&[0]).unwrap();
    assert!(close(loss.value().scalar_value(), 2.0f64.ln(), 1e-12));
}

#[test]
fn cross_entropy_three_quarters() {
    let logits = Node::leaf(Tensor::matrix(1, 2, vec![1.0f64.ln(), 3.0f64.ln()]).unwrap());
    let loss = logits.cross_entropy(&[1]).unwrap();
    assert!(close(loss.value().scalar_value(), -(0.75f64.ln()), 1e-12));
    assert!(close(loss.value().scalar_value(), 0.2877, 5e-5));
}

#[test]
fn cross_entropy_decreases_with_margin() {
    let mut last = f64::INFINITY;
    for margin in [0.0, 1.0, 4.0, 16.0, 64.0] {
        let logits = Node::leaf(Tensor::matrix(1, 2, vec![margin, 0.0]).unwrap());
        let loss = logits.cross_entropy(&[0]).unwrap().value().scalar_value();
        assert!(loss < last);
        last = loss;
    }
    assert!(last < 1e-20);
}

#[test]
fn cross_entropy_target_out_of_range() {
    let logits = Node::leaf(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
    assert!(logits.cross_entropy(&[2]).is_err());
}

#[test]
fn backward_of_sum_is_all_ones() {
    let x = Node::leaf(Tensor::vector(vec![3.0, -1.0, 2.0]));
    x.sum().backward().unwrap();
    assert_eq!(x.grad_clone().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn backward_of_square_sum() {
    let x = Node::leaf(Tensor::vector(vec![1.0, 2.0]));
    let loss = x.mul(&x).unwrap().sum();
    loss.backward().unwrap();
    assert_eq!(x.grad_clone().data(), &[2.0, 4.0]);
}

#[test]
fn backward_twice_doubles_gradients() {
    let x = Node::leaf(Tensor::vector(vec![1.0, 2.0]));
    let loss = x.mul(&x).unwrap().sum();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad_clone().data(), &[4.0, 8.0]);
}

#[test]
fn composite_ops_pass_grad_check() {
    // One randomized composite per op family, several seeds.
    for seed in 0..5u64 {
        let mut r = rng::seeded(seed, rng::STREAM_INIT);
        let mut params = ParameterSet::new();
        let a = params.insert(
            "a",
            Tensor::matrix(3, 4, (0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let w = params.insert(
            "w",
            Tensor::matrix(4, 3, (0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let bias = params.insert(
            "bias",
            Tensor::vector((0..3).map(|_| r.gen_range(-1.0..1.0)).collect()),
        );
        let gamma = params.insert("gamma", Tensor::ones(vec![3]));
        let beta = params.insert("beta", Tensor::zeros(vec![3]));
        let err = grad_check(&params, 1e-5, || {
            let h = a.matmul(&w)?.add_row(&bias)?;
            let h = h.layer_norm(&gamma, &beta, 1e-5)?;
            let h = h.gelu().sigmoid().tanh_act();
            let s = h.softmax(1)?;
            Ok(s.mul(&s)?.sum())
        })
        .unwrap();
        assert!(err < 1e-6, "seed {seed}: err {err}");
    }
}

#[test]
fn structural_ops_pass_grad_check() {
    for seed in 0..5u64 {
        let mut r = rng::seeded(100 + seed, rng::STREAM_INIT);
        let mut params = ParameterSet::new();
        let table = params.insert(
            "table",
            Tensor::matrix(6, 4, (0..24).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let kern = params.insert(
            "kern",
            Tensor::new(vec![2, 4, 3], (0..24).map(|_| r.gen_range(-1.0..1.0)).collect())
                .unwrap(),
        );
        let err = grad_check(&params, 1e-5, || {
            let x = table.embed_rows(&[1, 3, 3, 0, 5])?;
            let left = x.slice_cols(0, 2)?;
            let right = x.slice_cols(2, 2)?;
            let glued = concat_cols(&[right, left])?;
            let conv = glued.conv1d(&kern, 1)?;
            let pooled = conv.max_pool1d()?;
            let picked = x.gather_rows(&[0, 2, 2])?;
            let top = picked.slice_rows(0, 2)?;
            let stacked = concat_rows(&[pooled.clone(), top.slice_cols(0, 3)?])?;
            let t = stacked.transpose()?;
            Ok(t.mul(&t)?.sum())
        })
        .unwrap();
        assert!(err < 1e-6, "seed {seed}: err {err}");
    }
}

#[test]
fn cross_entropy_grad_check() {
    for seed in 0..3u64 {
        let mut r = rng::seeded(200 + seed, rng::STREAM_INIT);
        let mut params = ParameterSet::new();
        let logits = params.insert(
            "logits",
            Tensor::matrix(4, 3, (0..12).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap(),
        );
        let err = grad_check(&params, 1e-5, || logits.cross_entropy(&[0, 2, 1, 1])).unwrap();
        assert!(err < 1e-7, "seed {seed}: err {err}");
    }
}

#[test]
fn masked_softmax_puts_zero_mass_on_masked_columns() {
    let x = Node::leaf(Tensor::matrix(2, 3, vec![0.5, 0.2, 0.9, 0.1, 0.4, 0.3]).unwrap());
    let mut mask = Tensor::zeros(vec![2, 3]);
    mask.set2(0, 2, -1e30);
    mask.set2(1, 2, -1e30);
    let probs = x.add_const(&mask).unwrap().softmax(1).unwrap();
    for i in 0..2 {
        assert_eq!(probs.value().at2(i, 2), 0.0);
        let s: f64 = probs.value().data()[i * 3..(i + 1) * 3].iter().sum();
        assert!(close(s, 1.0, 1e-9));
    }
}

#[test]
fn ops_stay_finite_for_large_inputs() {
    let mut r = rng::seeded(42, rng::STREAM_INIT);
    let data: Vec<f64> = (0..16).map(|_| r.gen_range(-1e3..1e3)).collect();
    let x = Node::leaf(Tensor::matrix(4, 4, data).unwrap());
    assert!(x.softmax(1).unwrap().value().all_finite());
    assert!(x.sigmoid().value().all_finite());
    assert!(x.tanh_act().value().all_finite());
    assert!(x.gelu().value().all_finite());
    assert!(x.relu().value().all_finite());
    assert!(x
        .layer_norm(
            &Node::leaf(Tensor::ones(vec![4])),
            &Node::leaf(Tensor::zeros(vec![4])),
            1e-5
        )
        .unwrap()
        .value()
        .all_finite());
    assert!(x.cross_entropy(&[0, 1, 2, 3]).unwrap().value().all_finite());
}
