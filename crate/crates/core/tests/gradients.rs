mod common;

use common::{grad_fixture, gradient_check};
use hetgl2r::ranker::{batch_loss_and_grad, BatchMode};

#[test]
fn every_parameter_group_matches_finite_differences() {
    let fx = grad_fixture();
    let report = gradient_check(&fx, 1e-4);
    let worst = report
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    for (name, rel) in &report {
        assert!(*rel < 1e-3, "{name}: relative error {rel:e}");
    }
    println!("worst group {} at {:e}", worst.0, worst.1);
}

#[test]
fn eval_gradients_are_deterministic() {
    let fx = grad_fixture();
    let a = batch_loss_and_grad(&fx.model, &fx.data, &fx.lists, BatchMode::eval()).unwrap();
    let b = batch_loss_and_grad(&fx.model, &fx.data, &fx.lists, BatchMode::eval()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

fn encoder_grads(scale: f64) -> Vec<Vec<f64>> {
    use hetgl2r::nn::encoder::{encode_backward, encode_sequence};
    let fx = grad_fixture();
    let enc = encode_sequence(&fx.data.inputs[0], &fx.model, None);
    let d_out = enc.output.mapv(|v| scale * (v.sin() + 0.25));
    let mut grad = fx.model.params.zeros_like();
    encode_backward(&fx.model, &enc.cache, &d_out, &mut grad);
    grad.tensors().iter().map(|t| t.iter().copied().collect()).collect()
}

#[test]
fn zero_upstream_gradient_gives_zero_parameter_gradient() {
    for t in encoder_grads(0.0) {
        assert!(t.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn doubled_upstream_gradient_doubles_parameter_gradient() {
    let one = encoder_grads(1.0);
    let two = encoder_grads(2.0);
    let mut touched = 0;
    for (a, b) in one.iter().zip(&two) {
        for (x, y) in a.iter().zip(b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
            touched += (*x != 0.0) as usize;
        }
    }
    assert!(touched > 0);
}
