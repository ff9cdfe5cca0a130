//! Backpropagated gradients of the regularized objective against central
//! finite differences over every network parameter.

use repshape::net::{Batch, Network, TaskHead};
use repshape::regularizers::{Capture, RegularizerKind, RegularizerSpec, Target};
use repshape::Matrix;

const H: f64 = 1e-4;
const REL_TOL: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-8;

fn inputs() -> (Matrix, Vec<usize>) {
    let x = Matrix::from_rows(&[
        [0.12, 0.85, 0.33, 0.51],
        [0.78, 0.21, 0.69, 0.14],
        [0.44, 0.47, 0.91, 0.63],
        [0.05, 0.36, 0.27, 0.97],
        [0.58, 0.72, 0.49, 0.31],
    ])
    .unwrap();
    (x, vec![0, 1, 1, 0, 1])
}

/// Finite differences are only meaningful when no ReLU input sits within a
/// step of its kink (dead layers feed exact zeros forward).
fn smooth_at(net: &Network, x: &Matrix) -> bool {
    let trace = net.propagate(x).unwrap();
    trace.pre.iter().all(|p| p.as_slice().iter().all(|v| v.abs() > 10.0 * H))
}

fn smooth_net(widths: &[usize], head: TaskHead, x: &Matrix, from_seed: u64) -> Network {
    (from_seed..from_seed + 100)
        .map(|seed| Network::init(widths, head, seed).unwrap())
        .find(|net| smooth_at(net, x))
        .expect("some seed avoids ReLU kinks")
}

/// Returns the worst relative error over all parameters.
fn check(net: &Network, batch: &Batch<'_>, spec: &RegularizerSpec) -> f64 {
    let analytic = net.gradients(batch, spec).unwrap().grads;
    let analytic: Vec<f64> = analytic.slices().concat();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for tensor in 0..net.parameters().len() {
        for i in 0..net.parameters()[tensor].len() {
            let mut plus = net.clone();
            plus.parameters_mut()[tensor][i] += H;
            let mut minus = net.clone();
            minus.parameters_mut()[tensor][i] -= H;
            let fd = (plus.objective(batch, spec).unwrap().total - minus.objective(batch, spec).unwrap().total)
                / (2.0 * H);
            let a = analytic[flat];
            let diff = (a - fd).abs();
            if diff > ABS_FLOOR {
                worst = worst.max(diff / a.abs().max(fd.abs()));
            }
            flat += 1;
        }
    }
    worst
}

#[test]
fn every_kind_on_a_small_classifier() {
    let (x, y) = inputs();
    let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
    for seed in 0..3 {
        let net = smooth_net(&[4, 3, 3, 2], TaskHead::SoftmaxCrossEntropy, &x, seed * 100);
        for kind in RegularizerKind::ALL {
            for target in [Target::Layer(1), Target::Layer(2), Target::Output] {
                let spec = RegularizerSpec::new(kind, 0.7, target).unwrap();
                let worst = check(&net, &batch, &spec);
                assert!(worst <= REL_TOL, "{kind} at {target} (seed {seed}): rel err {worst:e}");
            }
        }
    }
}

#[test]
fn pre_activation_capture() {
    let (x, y) = inputs();
    let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
    let net = smooth_net(&[4, 3, 3, 2], TaskHead::SoftmaxCrossEntropy, &x, 5);
    for kind in [RegularizerKind::Cr, RegularizerKind::CwCr, RegularizerKind::Vr, RegularizerKind::CwVr] {
        let spec = RegularizerSpec::new(kind, 2.0, Target::Layer(2)).unwrap().with_capture(Capture::Pre);
        assert!(check(&net, &batch, &spec) <= REL_TOL, "{kind}");
    }
}

#[test]
fn autoencoder_head() {
    let (x, y) = inputs();
    let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
    let net = smooth_net(&[4, 3, 2, 3, 4], TaskHead::L2Reconstruction, &x, 11);
    for kind in RegularizerKind::ALL {
        let spec = RegularizerSpec::new(kind, 0.5, Target::Layer(2)).unwrap();
        let worst = check(&net, &batch, &spec);
        assert!(worst <= REL_TOL, "{kind}: {worst:e}");
    }
}

#[test]
fn softmax_cross_entropy_identity_at_logits() {
    let (x, y) = inputs();
    let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
    let net = Network::init(&[4, 2], TaskHead::SoftmaxCrossEntropy, 1).unwrap();
    let grads = net.gradients(&batch, &RegularizerSpec::none()).unwrap().grads;
    // single linear layer: dJ/dW = X^T (softmax - onehot) / N
    let logits = net.propagate(&x).unwrap().output().clone();
    let mut delta = Matrix::zeros(5, 2);
    for r in 0..5 {
        let row = logits.row(r);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for c in 0..2 {
            let onehot = if y[r] == c { 1.0 } else { 0.0 };
            delta.set(r, c, (row[c].exp() / z - onehot) / 5.0);
        }
    }
    let want = x.transpose().matmul(&delta).unwrap();
    assert!(grads.weights[0].max_abs_diff(&want) < 1e-15);
}
