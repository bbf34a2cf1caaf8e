use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn matmul_identity_and_hand_case() {
    let b = random(&[3, 4], 1);
    let out = kernels::matmul(&Tensor::identity(3), &b).unwrap();
    assert_eq!(out, b);

    let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let v = t2(&[&[0.0], &[1.0]]);
    assert_eq!(kernels::matmul(&a, &v).unwrap(), t2(&[&[2.0], &[4.0]]));
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let err = kernels::matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
    match err {
        Error::Shape { lhs, rhs, .. } => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err_msg_has(kernels::matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 1]))));
}

fn err_msg_has<T: std::fmt::Debug>(r: crate::Result<T>) -> bool {
    let msg = r.unwrap_err().to_string();
    msg.contains("[2, 3]") && msg.contains("[4, 1]")
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let a = random(&[3, 4], 2);
    let b = random(&[4, 5], 3);
    let rep = grad_check(&[a, b], 1e-6, 64, |g, v| {
        let y = g.matmul(&v[0], &v[1])?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn matmul_nt_matches_explicit_transpose() {
    let a = random(&[3, 4], 4);
    let b = random(&[5, 4], 5);
    let mut bt = Tensor::zeros(&[4, 5]);
    for i in 0..5 {
        for j in 0..4 {
            bt.data_mut()[j * 5 + i] = b.get(i, j);
        }
    }
    let direct = kernels::matmul(&a, &bt).unwrap();
    let nt = kernels::matmul_nt(&a, &b).unwrap();
    assert!(direct.max_abs_diff(&nt) < 1e-14);
    let rep = grad_check(&[a, b], 1e-6, 64, |g, v| {
        let y = g.matmul_nt(&v[0], &v[1])?;
        let y = g.mul(&y, &y)?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn elementwise_identities() {
    let x = random(&[3, 3], 6);
    let mut e = Eval;
    let xv = e.constant(x.clone());
    let add0 = elementwise(&mut e, ElementwiseOp::Add, &xv, Operand::Scalar(0.0)).unwrap();
    let mul1 = elementwise(&mut e, ElementwiseOp::Mul, &xv, Operand::Scalar(1.0)).unwrap();
    assert_eq!(*add0, x);
    assert_eq!(*mul1, x);
    let mismatch = e.constant(Tensor::zeros(&[3, 2]));
    assert!(elementwise(&mut e, ElementwiseOp::Add, &xv, Operand::Tensor(&mismatch)).is_err());
}

#[test]
fn hadamard_gradient_is_other_factor() {
    let a = random(&[2, 3], 7);
    let b = random(&[2, 3], 8);
    let mut g = Graph::new();
    let va = g.param(a);
    let vb = g.constant(b.clone());
    let p = elementwise(&mut g, ElementwiseOp::Mul, &va, Operand::Tensor(&vb)).unwrap();
    let s = g.sum(&p);
    g.backward(s).unwrap();
    assert_eq!(g.grad(va).unwrap(), b.data());
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let a = random(&[3, 4], 9);
    let b = random(&[3, 4], 10);
    let rep = grad_check(&[a, b], 1e-6, 64, |g, v| {
        let s = g.add(&v[0], &v[1])?;
        let d = g.sub(&s, &v[1])?;
        let d = g.sub(&d, &v[1])?;
        let p = g.mul(&d, &s)?;
        let p = g.scale(&p, 0.7);
        let p = g.add_scalar(&p, 0.3);
        let p = g.mul(&p, &p)?;
        Ok(g.sum(&p))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn softmax_basic_properties() {
    let s = kernels::softmax_rows(&Tensor::zeros(&[1, 3])).unwrap();
    for v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = random(&[4, 6], 11);
    let shifted = kernels::map(&x, |v| v + 17.5);
    let a = kernels::softmax_rows(&x).unwrap();
    let b = kernels::softmax_rows(&shifted).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-14);

    let mut bad = x.clone();
    bad.data_mut()[3] = f64::NAN;
    assert!(matches!(kernels::softmax_rows(&bad), Err(Error::Numeric(_))));
    bad.data_mut()[3] = f64::INFINITY;
    assert!(matches!(kernels::softmax_rows(&bad), Err(Error::Numeric(_))));
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let x = random(&[4, 5], 12);
    let w = random(&[4, 5], 13);
    let rep = grad_check(&[x], 1e-6, 64, |g, v| {
        let y = g.softmax_rows(&v[0])?;
        let wv = g.constant(w.clone());
        let y = g.mul(&y, &wv)?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn layer_norm_constant_row_is_zero_and_rows_are_standardised() {
    let gamma = Tensor::filled(&[4], 1.0);
    let beta = Tensor::zeros(&[4]);
    let c = Tensor::filled(&[1, 4], 3.25);
    let (y, _) = kernels::layer_norm(&c, &gamma, &beta, 1e-5).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));

    let x = kernels::map(&random(&[5, 4], 14), |v| 10.0 * v);
    let (y, _) = kernels::layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
    for r in 0..5 {
        let row = y.row(r);
        let mean = row.iter().sum::<f64>() / 4.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // var·(σ² + eps)/σ² = 1 ⇒ deviation bounded by eps/σ².
        let raw = x.row(r);
        let rm = raw.iter().sum::<f64>() / 4.0;
        let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() <= 1e-5 / rv + 1e-12);
    }
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let x = random(&[3, 5], 15);
    let gamma = random(&[5], 16);
    let beta = random(&[5], 17);
    let w = random(&[3, 5], 18);
    let rep = grad_check(&[x, gamma, beta], 1e-6, 64, |g, v| {
        let y = g.layer_norm(&v[0], &v[1], &v[2], 1e-5)?;
        let wv = g.constant(w.clone());
        let y = g.mul(&y, &wv)?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn gelu_values_and_gradient() {
    assert_eq!(kernels::gelu_scalar(0.0), 0.0);
    assert!((kernels::gelu_scalar(10.0) - 10.0).abs() < 1e-9);
    assert!(kernels::gelu_scalar(-10.0).abs() < 1e-9);
    // Exact form, not the tanh approximation: Φ(1) = 0.841344746068543.
    assert!((kernels::gelu_scalar(1.0) - 0.841_344_746_068_543).abs() < 1e-14);
    let x = kernels::map(&random(&[3, 4], 19), |v| 3.0 * v);
    let rep = grad_check(&[x], 1e-6, 64, |g, v| {
        let y = g.gelu(&v[0]);
        let y = g.mul(&y, &y)?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn slice_concat_bias_norm_gradients() {
    let x = random(&[3, 6], 20);
    let b = random(&[2], 21);
    let rep = grad_check(&[x, b], 1e-6, 64, |g, v| {
        let l = g.slice_cols(&v[0], 0, 2)?;
        let r = g.slice_cols(&v[0], 4, 2)?;
        let l = g.add_bias(&l, &v[1])?;
        let c = g.concat_cols(&[r, l])?;
        let c = g.gelu(&c);
        Ok(g.norm(&c))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn backward_of_sum_is_ones_and_accumulates() {
    let mut g = Graph::new();
    let w = g.param(random(&[3, 2], 22));
    let s = g.sum(&w);
    g.backward(s).unwrap();
    assert!(g.grad(w).unwrap().iter().all(|&v| v == 1.0));
    g.backward(s).unwrap();
    assert!(g.grad(w).unwrap().iter().all(|&v| v == 2.0));
    g.zero_grad();
    assert!(g.grad(w).is_none());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let w = g.param(random(&[3, 2], 23));
    assert!(matches!(g.backward(w), Err(Error::Usage(_))));
}

#[test]
fn backward_visits_each_node_once() {
    let mut g = Graph::new();
    let a = g.param(random(&[2, 3], 24));
    let b = g.param(random(&[3, 2], 25));
    let c = g.constant(random(&[2, 2], 26));
    let m = g.matmul(&a, &b).unwrap();
    let m = g.add(&m, &c).unwrap();
    let m = g.softmax_rows(&m).unwrap();
    let s = g.sum(&m);
    assert_eq!(g.len(), 7);
    g.backward(s).unwrap();
    assert_eq!(g.last_backward_visits(), g.len());
    assert_eq!(g.op_tag(s), "sum");
    assert!(!g.requires_grad(c));
}

#[test]
fn grad_check_on_quadratic_is_exact() {
    let x = random(&[4, 3], 27);
    let rep = grad_check(&[x], 1e-3, 64, |g, v| {
        let sq = g.mul(&v[0], &v[0])?;
        let s = g.sum(&sq);
        Ok(g.scale(&s, 0.5))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-10, "{rep:?}");
}

#[test]
fn grad_check_matmul_chain() {
    let a = random(&[3, 4], 28);
    let b = random(&[4, 4], 29);
    let c = random(&[4, 2], 30);
    let rep = grad_check(&[a, b, c], 1e-6, 64, |g, v| {
        let y = g.matmul(&v[0], &v[1])?;
        let y = g.matmul(&y, &v[2])?;
        let y = g.mul(&y, &y)?;
        Ok(g.sum(&y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn graph_and_eval_agree_bitwise() {
    let x = random(&[4, 5], 31);
    let w = random(&[5, 3], 32);
    let gamma = random(&[3], 33);
    let beta = random(&[3], 34);
    fn run<B: Backend>(b: &mut B, x: &Tensor, w: &Tensor, g: &Tensor, be: &Tensor) -> Tensor {
        let (x, w, g, be) = (
            b.constant(x.clone()),
            b.constant(w.clone()),
            b.constant(g.clone()),
            b.constant(be.clone()),
        );
        let y = b.matmul(&x, &w).unwrap();
        let y = b.layer_norm(&y, &g, &be, 1e-5).unwrap();
        let y = b.gelu(&y);
        let y = b.softmax_rows(&y).unwrap();
        b.value(&y).clone()
    }
    let mut graph = Graph::new();
    let a = run(&mut graph, &x, &w, &gamma, &beta);
    let b = run(&mut Eval, &x, &w, &gamma, &beta);
    assert_eq!(a, b);
}

#[test]
fn flop_tally_counts_matmul_macs() {
    let a = random(&[3, 4], 35);
    let b = random(&[4, 5], 36);
    let (_, tally) = flops::measure(|| kernels::matmul(&a, &b).unwrap());
    assert_eq!(tally.matmul_macs, 60);
}

#[test]
fn tensor_constructor_checks_invariants() {
    assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    assert!(Tensor::new(vec![0, 2], vec![]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>(), scale in 0.1f64..50.0) {
        let x = kernels::map(&random(&[rows, cols], seed), |v| v * scale);
        let y = kernels::softmax_rows(&x).unwrap();
        for r in 0..rows {
            let s: f64 = y.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(y.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    // Two-column layer norm maps every row to ±1, leaving only eps-sized
    // gradients, so the width starts at three.
    fn random_small_graphs_pass_gradient_checks(m in 1usize..8, k in 1usize..8, n in 3usize..8, seed in any::<u64>()) {
        let a = random(&[m, k], seed);
        let b = random(&[k, n], seed.wrapping_add(1));
        let gamma = random(&[n], seed.wrapping_add(2));
        let beta = random(&[n], seed.wrapping_add(3));
        let rep = grad_check(&[a, b, gamma, beta], 1e-6, 64, |g, v| {
            let y = g.matmul(&v[0], &v[1])?;
            let y = g.layer_norm(&y, &v[2], &v[3], 1e-5)?;
            let y = g.gelu(&y);
            let s = g.softmax_rows(&y)?;
            let y = g.mul(&s, &y)?;
            Ok(g.sum(&y))
        }).unwrap();
        prop_assert!(rep.max_rel_error < 1e-5, "{:?}", rep);
    }
}
