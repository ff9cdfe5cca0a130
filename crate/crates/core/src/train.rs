//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{Batch, Network};
use crate::optim::{Optimizer, OptimizerKind};
use crate::regularizers::RegularizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub spec: RegularizerSpec,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 100,
            lr: 1e-4,
            optimizer: OptimizerKind::adam(),
            spec: RegularizerSpec::none(),
            seed: 0,
        }
    }
}

/// Batch-averaged costs over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// `J`
    pub task_loss: f64,
    /// `lambda * Omega`
    pub penalty: f64,
    /// `J + lambda * Omega`
    pub total: f64,
    /// Batches where a class-wise penalty found no usable class.
    pub degenerate_batches: usize,
    /// Filled in by the epoch callback, if any.
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    /// Reason training stopped early on non-finite values.
    pub diverged: Option<String>,
}

/// Trains `net` in place. `on_epoch` runs after every epoch and may return a
/// validation score to record in that epoch's log.
pub fn fit(
    net: &mut Network,
    train: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Network) -> Option<f64>,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut task, mut penalty, mut total) = (0.0, 0.0, 0.0);
        let mut degenerate = 0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let inputs = train.inputs().gather_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let batch = Batch { inputs: &inputs, labels: &labels, num_classes: train.num_classes() };
            let step = match net.gradients(&batch, &cfg.spec) {
                Ok(step) => step,
                Err(Error::NonFinite(what)) => return Ok(diverged(logs, epoch, what)),
                Err(e) => return Err(e),
            };
            if step.cost.diverged() {
                return Ok(diverged(logs, epoch, format!("cost {}", step.cost.total)));
            }
            match opt.step(net, &step.grads) {
                Ok(()) => {}
                Err(Error::NonFinite(what)) => return Ok(diverged(logs, epoch, what)),
                Err(e) => return Err(e),
            }
            task += step.cost.task;
            penalty += step.cost.penalty;
            total += step.cost.total;
            degenerate += usize::from(step.degenerate);
            batches += 1;
        }
        let n = batches as f64;
        let validation = on_epoch(epoch, net);
        logs.push(EpochLog {
            epoch,
            task_loss: task / n,
            penalty: penalty / n,
            total: total / n,
            degenerate_batches: degenerate,
            validation,
        });
    }
    Ok(TrainOutcome { epochs: logs, diverged: None })
}

fn diverged(epochs: Vec<EpochLog>, epoch: usize, what: String) -> TrainOutcome {
    TrainOutcome { epochs, diverged: Some(format!("epoch {epoch}: {what}")) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::regularizers::{RegularizerKind, Target};

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 16, lr: 1e-2, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn loss_decreases_on_blobs() {
        let data = make_blobs(3, 5, 40, 0.05, 1).unwrap();
        let mut net = Network::mlp(5, &[8, 8], 3, 1).unwrap();
        let out = fit(&mut net, &data, &config(15), |_, _| None).unwrap();
        assert!(out.diverged.is_none());
        assert!(out.epochs.last().unwrap().task_loss < 0.5 * out.epochs[0].task_loss);
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let data = make_blobs(3, 5, 30, 0.1, 2).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::CwVr, 0.1, Target::Layer(2)).unwrap();
        let cfg = TrainConfig { spec, ..config(4) };
        let run = || {
            let mut net = Network::mlp(5, &[6, 6], 3, 7).unwrap();
            let out = fit(&mut net, &data, &cfg, |_, _| None).unwrap();
            (out, net)
        };
        let (a, na) = run();
        let (b, nb) = run();
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }

    #[test]
    fn logged_total_is_sum_of_parts() {
        let data = make_blobs(2, 4, 30, 0.1, 4).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Cr, 1.0, Target::Layer(1)).unwrap();
        let mut net = Network::mlp(4, &[5], 2, 1).unwrap();
        let out = fit(&mut net, &data, &TrainConfig { spec, ..config(3) }, |e, _| Some(e as f64)).unwrap();
        for log in &out.epochs {
            assert!((log.total - (log.task_loss + log.penalty)).abs() <= 1e-12);
            assert_eq!(log.validation, Some(log.epoch as f64));
        }
    }

    #[test]
    fn huge_lambda_diverges_instead_of_failing() {
        let data = make_blobs(2, 4, 30, 0.3, 4).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Cr, 1e300, Target::Layer(1)).unwrap();
        let mut net = Network::mlp(4, &[5, 5], 2, 1).unwrap();
        let cfg = TrainConfig { spec, lr: 10.0, optimizer: OptimizerKind::Sgd, ..config(5) };
        let out = fit(&mut net, &data, &cfg, |_, _| None).unwrap();
        assert!(out.diverged.is_some());
    }
}
