mod common;

use common::{gradcheck_instance, gradcheck_model, model_errors, op_errors, random_tensor};
use pert_core::{seed, Graph};

const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

#[test]
fn every_op_matches_finite_differences() {
    for (name, err) in op_errors() {
        assert!(err < OP_TOL, "{name}: relative error {err:.3e}");
    }
}

#[test]
fn masked_softmax_entries_stay_zero() {
    let mut x = random_tensor(&[2, 4], &mut seed::rng(3, &[]));
    x.data_mut()[3] = f64::NEG_INFINITY;
    let mut g = Graph::new();
    let v = g.leaf(x, true);
    let p = g.softmax(v, 1).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert_eq!(g.value(p).data()[3], 0.0);
    assert!(g.grad(v).unwrap().data().iter().all(|d| d.is_finite()));
}

#[test]
fn dropout_is_linear_in_its_input() {
    let x = random_tensor(&[4, 4], &mut seed::rng(5, &[]));
    let mut g = Graph::new();
    let v = g.leaf(x.clone(), true);
    let y = g.dropout(v, 0.5, &mut seed::rng(1, &[]), true).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    let grad = g.grad(v).unwrap();
    for ((&xi, &yi), &gi) in x.data().iter().zip(g.value(y).data()).zip(grad.data()) {
        assert!((yi - xi * gi).abs() < 1e-12);
        assert!(gi == 0.0 || (gi - 2.0).abs() < 1e-12);
    }
}

#[test]
fn full_tiny_model_matches_finite_differences() {
    for (name, err) in model_errors(&gradcheck_model(), &gradcheck_instance()) {
        assert!(err < MODEL_TOL, "{name}: relative error {err:.3e}");
    }
}
