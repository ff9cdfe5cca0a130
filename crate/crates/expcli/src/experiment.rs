//! Training runs, the penalty-weight sweep, repeated final runs and the
//! layer-placement sweep.

use std::fmt;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use repshape::data::{load_mnist_dir, make_blobs, split, Dataset, Splits};
use repshape::net::{Network, AUTOENCODER_WIDTHS};
use repshape::stats::{characteristics, ActivationBatch, RepCharacteristics};
use repshape::train::{fit, EpochLog, TrainConfig};
use repshape::{Capture, RegularizerKind, RegularizerSpec, Target};
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::CliError;

pub const MNIST_VALIDATION: usize = 10_000;

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits, CliError> {
    match cfg.task {
        Task::MnistMlp | Task::Autoencoder => {
            let (train, test) = load_mnist_dir(&cfg.mnist_dir).map_err(|e| {
                CliError::Config(format!("cannot load MNIST from {}: {e}", cfg.mnist_dir.display()))
            })?;
            let val = cfg.val_size.unwrap_or(MNIST_VALIDATION);
            Ok(split(&train, test, val, cfg.train_size, cfg.data_seed)?)
        }
        Task::Blobs => {
            let b = cfg.blobs;
            let all = make_blobs(b.classes, b.dims, b.per_class + b.test_per_class, b.spread, cfg.data_seed)?;
            let cut = all.len() - b.classes * b.test_per_class;
            let (full, test) = (all.range(0, cut), all.range(cut, all.len()));
            let val = cfg.val_size.unwrap_or(full.len() / 5);
            Ok(split(&full, test, val, cfg.train_size, cfg.data_seed)?)
        }
    }
}

pub fn build_network(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Network, CliError> {
    let net = match cfg.task {
        Task::MnistMlp | Task::Blobs => {
            Network::mlp(data.features(), &vec![cfg.width; cfg.depth], data.num_classes(), seed)?
        }
        Task::Autoencoder => {
            let mut widths = AUTOENCODER_WIDTHS.to_vec();
            let last = widths.len() - 1;
            widths[0] = data.features();
            widths[last] = data.features();
            Network::autoencoder(&widths, seed)?
        }
    };
    Ok(net)
}

/// Test-style metric: error in percent for classifiers, per-feature MSE for
/// the autoencoder. Lower is better either way.
pub fn evaluate(task: Task, net: &Network, data: &Dataset) -> Result<f64, CliError> {
    Ok(if task.is_classifier() {
        net.classification_error(data.inputs(), data.labels())?
    } else {
        net.reconstruction_mse(data.inputs())?
    })
}

pub fn metric_name(task: Task) -> &'static str {
    if task.is_classifier() {
        "error_pct"
    } else {
        "mse"
    }
}

/// Characteristics of one layer's representations over a whole dataset.
pub fn layer_characteristics(
    net: &Network,
    data: &Dataset,
    target: Target,
    capture: Capture,
) -> Result<RepCharacteristics, CliError> {
    let l = net.resolve_target(target)?;
    let trace = net.propagate(data.inputs())?;
    let batch = ActivationBatch::new(trace.layer(l, capture).clone(), data.labels().to_vec(), data.num_classes())?;
    Ok(characteristics(&batch)?)
}

/// One training run, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub task: Task,
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub target: String,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub metric: &'static str,
    /// Final metric on the evaluation split; `None` when the run diverged.
    pub final_metric: Option<f64>,
    pub diverged: Option<String>,
    /// Representation characteristics of the regularized (or default) layer
    /// on the evaluation split.
    pub characteristics: Option<RepCharacteristics>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub record: RunRecord,
    pub network: Network,
}

/// Which data a run trains on and is scored against.
#[derive(Debug, Clone, Copy)]
pub struct RunData<'a> {
    pub train: &'a Dataset,
    /// Scored after every epoch when validation tracking is on.
    pub monitor: Option<&'a Dataset>,
    /// Scored once at the end.
    pub eval: &'a Dataset,
    pub with_characteristics: bool,
}

pub fn spec_for(cfg: &ExperimentConfig, lambda: f64, target: Target) -> Result<RegularizerSpec, CliError> {
    if cfg.kind == RegularizerKind::None {
        return Ok(RegularizerSpec::none());
    }
    Ok(RegularizerSpec::new(cfg.kind, lambda, target)?.with_capture(cfg.capture))
}

pub fn run_one(
    cfg: &ExperimentConfig,
    lambda: f64,
    target: Target,
    seed: u64,
    data: RunData<'_>,
) -> Result<Run, CliError> {
    let started = Instant::now();
    let spec = spec_for(cfg, lambda, target)?;
    let mut net = build_network(cfg, data.train, seed)?;
    net.resolve_target(match target {
        Target::AllWeights => Target::Output,
        t => t,
    })?;
    let tcfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        optimizer: cfg.optimizer,
        spec,
        seed,
    };
    let outcome = fit(&mut net, data.train, &tcfg, |_, net| {
        let monitor = data.monitor.filter(|_| cfg.track_validation)?;
        evaluate(cfg.task, net, monitor).ok()
    })?;
    let (final_metric, characteristics) = match &outcome.diverged {
        Some(why) => {
            warn!("{} λ={lambda} seed {seed} diverged: {why}", cfg.kind);
            (None, None)
        }
        None => {
            let metric = evaluate(cfg.task, &net, data.eval)?;
            let chars = if data.with_characteristics {
                let layer = match target {
                    Target::AllWeights => cfg.task.default_target(),
                    t => t,
                };
                Some(layer_characteristics(&net, data.eval, layer, Capture::Post)?)
            } else {
                None
            };
            (metric.is_finite().then_some(metric), chars)
        }
    };
    let record = RunRecord {
        config_hash: cfg.hash(),
        task: cfg.task,
        kind: cfg.kind,
        lambda: if cfg.kind == RegularizerKind::None { 0.0 } else { lambda },
        target: target.to_string(),
        seed,
        epochs: outcome.epochs,
        metric: metric_name(cfg.task),
        final_metric,
        diverged: outcome.diverged,
        characteristics,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    info!(
        "{} {} λ={} layer {} seed {}: {} = {:?} ({:.1}s)",
        cfg.task, cfg.kind, record.lambda, record.target, seed, record.metric, record.final_metric, record.wall_time_secs
    );
    Ok(Run { record, network: net })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    /// Final-epoch validation metric; `None` for a diverged run.
    pub score: Option<f64>,
    pub record: RunRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub kind: RegularizerKind,
    pub target: String,
    pub points: Vec<SweepPoint>,
    /// `None` when every grid value diverged.
    pub selected: Option<f64>,
}

impl Sweep {
    pub fn selection(&self) -> Result<f64, CliError> {
        self.selected.ok_or_else(|| {
            let lambdas: Vec<String> = self.points.iter().map(|p| p.lambda.to_string()).collect();
            CliError::Diverged(format!("{} diverged for every λ in {{{}}}", self.kind, lambdas.join(", ")))
        })
    }
}

/// Lowest score wins; `points` must be in ascending λ order so that ties go
/// to the smaller λ. Unscored (diverged) points never win.
pub fn select_lambda(points: &[SweepPoint]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        if let Some(score) = p.score {
            if best.map_or(true, |(_, s)| score < s) {
                best = Some((p.lambda, score));
            }
        }
    }
    best.map(|(lambda, _)| lambda)
}

/// Trains once per grid value on the training split and scores the final
/// epoch on the validation split.
pub fn lambda_sweep(cfg: &ExperimentConfig, splits: &Splits) -> Result<Sweep, CliError> {
    let target = cfg.target();
    if cfg.kind == RegularizerKind::None {
        return Ok(Sweep { kind: cfg.kind, target: target.to_string(), points: vec![], selected: Some(0.0) });
    }
    if splits.validation.is_empty() {
        return Err(CliError::Config("λ selection needs a validation split".into()));
    }
    let seed = cfg.run_seeds()[0];
    let data = RunData {
        train: &splits.train,
        monitor: Some(&splits.validation),
        eval: &splits.validation,
        with_characteristics: false,
    };
    let points = cfg
        .sorted_grid()
        .par_iter()
        .map(|&lambda| {
            let run = run_one(cfg, lambda, target, seed, data)?;
            Ok(SweepPoint { lambda, score: run.record.final_metric, record: run.record })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let selected = select_lambda(&points);
    if let Some(l) = selected {
        info!("{} at layer {target}: selected λ = {l}", cfg.kind);
    }
    Ok(Sweep { kind: cfg.kind, target: target.to_string(), points, selected })
}

/// Mean ± standard deviation over the runs that finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub runs: usize,
    /// Diverged runs left out of `mean` and `std`.
    pub excluded: usize,
}

impl Summary {
    pub fn from_metrics(metrics: &[Option<f64>]) -> Self {
        let done: Vec<f64> = metrics.iter().flatten().copied().collect();
        let n = done.len() as f64;
        let mean = done.iter().sum::<f64>() / n;
        let std = (done.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Summary { mean, std, runs: done.len(), excluded: metrics.len() - done.len() }
    }

    pub fn all_diverged(&self) -> bool {
        self.runs == 0
    }

    /// `mean ± std`, with two decimals for percentages and three significant
    /// digits otherwise.
    pub fn formatted(&self, task: Task) -> String {
        if self.all_diverged() {
            return "diverged".into();
        }
        if task.is_classifier() {
            format!("{:.2} ± {:.2}", self.mean, self.std)
        } else {
            format!("{:.2e} ± {:.2e}", self.mean, self.std)
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {} over {} runs", self.mean, self.std, self.runs)?;
        if self.excluded > 0 {
            write!(f, " ({} diverged)", self.excluded)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FinalRuns {
    pub lambda: f64,
    pub target: Target,
    pub runs: Vec<Run>,
    pub summary: Summary,
}

impl FinalRuns {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().map(|r| &r.record)
    }
}

fn final_data<'a>(cfg: &ExperimentConfig, splits: &'a Splits, train: &'a Dataset) -> RunData<'a> {
    RunData {
        train,
        monitor: (!cfg.merge_validation && !splits.validation.is_empty()).then_some(&splits.validation),
        eval: &splits.test,
        with_characteristics: true,
    }
}

/// One run per repetition seed at a fixed λ, scored on the test split.
pub fn run_final(cfg: &ExperimentConfig, lambda: f64, target: Target, splits: &Splits) -> Result<FinalRuns, CliError> {
    let train = splits.final_training(cfg.merge_validation)?;
    let data = final_data(cfg, splits, &train);
    let runs = cfg
        .run_seeds()
        .par_iter()
        .map(|&seed| run_one(cfg, lambda, target, seed, data))
        .collect::<Result<Vec<_>, CliError>>()?;
    let metrics: Vec<Option<f64>> = runs.iter().map(|r| r.record.final_metric).collect();
    Ok(FinalRuns { lambda, target, runs, summary: Summary::from_metrics(&metrics) })
}

/// Every hidden layer, then the output layer.
pub fn layer_targets(cfg: &ExperimentConfig, splits: &Splits) -> Result<Vec<Target>, CliError> {
    let layers = build_network(cfg, &splits.train, 0)?.num_layers();
    Ok((1..layers).map(Target::Layer).chain([Target::Output]).collect())
}

/// `run_final` once per layer in `targets`, all at the same λ.
pub fn layer_sweep(
    cfg: &ExperimentConfig,
    lambda: f64,
    targets: &[Target],
    splits: &Splits,
) -> Result<Vec<FinalRuns>, CliError> {
    let train = splits.final_training(cfg.merge_validation)?;
    let data = final_data(cfg, splits, &train);
    let seeds = cfg.run_seeds();
    let jobs: Vec<(Target, u64)> = targets.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(target, seed)| run_one(cfg, lambda, target, seed, data))
        .collect::<Result<Vec<_>, CliError>>()?
        .into_iter();
    Ok(targets
        .iter()
        .map(|&target| {
            let runs: Vec<Run> = runs.by_ref().take(seeds.len()).collect();
            let metrics: Vec<Option<f64>> = runs.iter().map(|r| r.record.final_metric).collect();
            FinalRuns { lambda, target, runs, summary: Summary::from_metrics(&metrics) }
        })
        .collect())
}
