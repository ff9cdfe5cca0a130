use repshape::data::{make_blobs, split};
use repshape::net::Network;
use repshape::optim::OptimizerKind;
use repshape::regularizers::{penalty_cwvr, RegularizerKind, RegularizerSpec, Target};
use repshape::stats::ActivationBatch;
use repshape::train::{fit, TrainConfig};

#[test]
fn linear_classifier_separates_two_blobs() {
    let full = make_blobs(2, 10, 300, 0.08, 21).unwrap();
    let test = make_blobs(2, 10, 300, 0.08, 21).unwrap().shuffled(5);
    let s = split(&full, test, 100, None, 0).unwrap();
    let mut net = Network::mlp(10, &[], 2, 3).unwrap();
    let cfg = TrainConfig { epochs: 30, batch_size: 20, lr: 0.01, seed: 1, ..TrainConfig::default() };
    fit(&mut net, &s.train, &cfg, |_, _| None).unwrap();
    let err = net.classification_error(s.validation.inputs(), s.validation.labels()).unwrap();
    assert!(err < 5.0, "validation error {err}%");
}

#[test]
fn task_loss_falls_during_the_first_epochs() {
    let data = make_blobs(4, 8, 100, 0.05, 2).unwrap();
    let mut net = Network::mlp(8, &[16, 16], 4, 2).unwrap();
    let cfg = TrainConfig { epochs: 5, batch_size: 25, lr: 3e-3, seed: 2, ..TrainConfig::default() };
    let out = fit(&mut net, &data, &cfg, |_, _| None).unwrap();
    let losses: Vec<f64> = out.epochs.iter().map(|e| e.task_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn zero_spread_blobs_have_no_intra_class_variance() {
    let data = make_blobs(3, 6, 20, 0.0, 8).unwrap();
    for chunk in 0..6 {
        let b = data.range(chunk * 10, chunk * 10 + 10);
        let act = ActivationBatch::new(b.inputs().clone(), b.labels().to_vec(), 3).unwrap();
        assert_eq!(penalty_cwvr(&act).unwrap().omega, 0.0);
    }
}

#[test]
fn momentum_and_rmsprop_train_too() {
    let data = make_blobs(3, 6, 60, 0.05, 9).unwrap();
    for (optimizer, lr) in [(OptimizerKind::momentum(), 0.05), (OptimizerKind::rmsprop(), 1e-2)] {
        let mut net = Network::mlp(6, &[12], 3, 4).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::CwVr, 0.1, Target::Layer(1)).unwrap();
        let cfg = TrainConfig { epochs: 20, batch_size: 30, lr, optimizer, spec, seed: 4 };
        let out = fit(&mut net, &data, &cfg, |_, _| None).unwrap();
        assert!(out.diverged.is_none());
        let err = net.classification_error(data.inputs(), data.labels()).unwrap();
        assert!(err < 10.0, "{optimizer}: {err}%");
    }
}
