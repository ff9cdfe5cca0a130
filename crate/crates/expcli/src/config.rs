//! Experiment configuration: a `key = value` file plus command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use repshape::optim::OptimizerKind;
use repshape::{Capture, RegularizerKind, Target};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    MnistMlp,
    Autoencoder,
    Blobs,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::MnistMlp => "mnist-mlp",
            Task::Autoencoder => "autoencoder",
            Task::Blobs => "blobs",
        }
    }

    /// Layer regularized when the config names none.
    pub fn default_target(self) -> Target {
        match self {
            Task::Autoencoder => Target::Layer(3),
            _ => Target::Layer(5),
        }
    }

    pub fn is_classifier(self) -> bool {
        self != Task::Autoencoder
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist-mlp" | "mnist" | "mlp" => Ok(Task::MnistMlp),
            "autoencoder" | "ae" => Ok(Task::Autoencoder),
            "blobs" => Ok(Task::Blobs),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Synthetic Gaussian-cluster data, for runs without MNIST on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlobsConfig {
    pub classes: usize,
    pub dims: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self { classes: 4, dims: 20, per_class: 250, test_per_class: 100, spread: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub kind: RegularizerKind,
    /// Fixed penalty weight; when unset, `train` selects one from `grid`.
    pub lambda: Option<f64>,
    pub grid: Vec<f64>,
    /// Unset means the task's default layer.
    pub target: Option<Target>,
    pub capture: Capture,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    /// First repetition seed; later repetitions count up from it.
    pub seed: u64,
    /// Explicit repetition seeds, overriding `seed`/`repetitions`.
    pub seeds: Option<Vec<u64>>,
    /// Seeds the training-subset shuffle (and blob generation).
    pub data_seed: u64,
    /// Data-size condition; unset trains on every non-validation sample.
    pub train_size: Option<usize>,
    /// Unset means 10000 for MNIST and a fifth of the training blobs.
    pub val_size: Option<usize>,
    /// Return validation rows to the training set for final runs.
    pub merge_validation: bool,
    /// Layer-width condition for the MLP hidden layers.
    pub width: usize,
    pub depth: usize,
    /// Record validation performance after every epoch, not just the last.
    pub track_validation: bool,
    pub blobs: BlobsConfig,
    #[serde(skip)]
    pub mnist_dir: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::MnistMlp,
            kind: RegularizerKind::None,
            lambda: None,
            grid: DEFAULT_GRID.to_vec(),
            target: None,
            capture: Capture::Post,
            optimizer: OptimizerKind::adam(),
            lr: 1e-4,
            epochs: 50,
            batch_size: 100,
            repetitions: 5,
            seed: 0,
            seeds: None,
            data_seed: 0,
            train_size: None,
            val_size: None,
            merge_validation: false,
            width: 100,
            depth: 6,
            track_validation: true,
            blobs: BlobsConfig::default(),
            mnist_dir: PathBuf::from("data/mnist"),
            out: PathBuf::from("runs"),
            threads: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `none`/`all`/`full` leave an optional size unset.
fn parse_size(key: &str, value: &str) -> Result<Option<usize>, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "none" | "all" | "full" => Ok(None),
        v => {
            let v = v.strip_suffix('k').map(|n| format!("{n}000")).unwrap_or_else(|| v.to_string());
            parse(key, &v).map(Some)
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key} = {value:?}: expected a boolean"))),
    }
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {pair:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "task" => self.task = value.parse().map_err(CliError::Config)?,
            "reg" | "regularizer" | "kind" => self.kind = parse(&key, value)?,
            "lambda" => {
                self.lambda = match value.to_ascii_lowercase().as_str() {
                    "" | "auto" | "sweep" => None,
                    _ => Some(parse(&key, value)?),
                }
            }
            "grid" => self.grid = parse_list(&key, value)?,
            "layer" | "target" => {
                self.target = match value.to_ascii_lowercase().as_str() {
                    "" | "default" => None,
                    _ => Some(parse(&key, value)?),
                }
            }
            "capture" => self.capture = parse(&key, value)?,
            "optimizer" => self.optimizer = parse(&key, value)?,
            "lr" | "learning_rate" => self.lr = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "batch_size" | "batch" => self.batch_size = parse(&key, value)?,
            "repetitions" | "reps" => self.repetitions = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "seeds" => self.seeds = Some(parse_list(&key, value)?),
            "data_seed" => self.data_seed = parse(&key, value)?,
            "train_size" | "data_size" => self.train_size = parse_size(&key, value)?,
            "val_size" => self.val_size = parse_size(&key, value)?,
            "merge_validation" => self.merge_validation = parse_bool(&key, value)?,
            "width" => self.width = parse(&key, value)?,
            "depth" => self.depth = parse(&key, value)?,
            "track_validation" => self.track_validation = parse_bool(&key, value)?,
            "blobs_classes" => self.blobs.classes = parse(&key, value)?,
            "blobs_dims" => self.blobs.dims = parse(&key, value)?,
            "blobs_per_class" => self.blobs.per_class = parse(&key, value)?,
            "blobs_test_per_class" => self.blobs.test_per_class = parse(&key, value)?,
            "blobs_spread" => self.blobs.spread = parse(&key, value)?,
            "mnist_dir" | "data_dir" => self.mnist_dir = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = parse(&key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if self.grid.is_empty() || self.grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return fail(format!("lambda grid {:?} must be non-empty and non-negative", self.grid));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return fail(format!("lambda {l} must be finite and non-negative"));
            }
        }
        if self.run_seeds().is_empty() {
            return fail("at least one repetition is required".into());
        }
        if self.threads == 0 {
            return fail("threads must be at least 1".into());
        }
        if self.width == 0 || self.depth == 0 {
            return fail("width and depth must be positive".into());
        }
        if self.task == Task::Blobs && self.blobs.classes < 2 {
            return fail("blobs need at least two classes".into());
        }
        match self.target() {
            Target::AllWeights if self.kind.is_representation() => {
                fail(format!("{} needs a layer target", self.kind))
            }
            Target::Layer(0) => fail("layers are numbered from 1".into()),
            _ => Ok(()),
        }
    }

    pub fn target(&self) -> Target {
        if self.kind.is_weight() {
            return Target::AllWeights;
        }
        self.target.unwrap_or_else(|| self.task.default_target())
    }

    /// Grid in ascending order, so ties resolve toward the smaller value.
    pub fn sorted_grid(&self) -> Vec<f64> {
        let mut grid = self.grid.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.repetitions as u64).map(|r| self.seed + r).collect(),
        }
    }

    /// Hex SHA-256 of every setting that affects results.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.grid, vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0]);
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.epochs, 50);
        assert_eq!(cfg.batch_size, 100);
        assert_eq!(cfg.target(), Target::Layer(5));
        assert_eq!(cfg.run_seeds(), vec![0, 1, 2, 3, 4]);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_with_comments() {
        let cfg = ExperimentConfig::parse(
            "# default MNIST condition\n\
             reg = cw-vr   # class-wise variance\n\
             lambda = 1\n\
             layer = 5\n\
             \n\
             train_size = 1k\n\
             grid = 0.1, 1, 10\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, RegularizerKind::CwVr);
        assert_eq!(cfg.lambda, Some(1.0));
        assert_eq!(cfg.train_size, Some(1000));
        assert_eq!(cfg.grid, vec![0.1, 1.0, 10.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("epochs = 3\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ExperimentConfig::parse("epochs 3").is_err());
        assert!(ExperimentConfig::parse("epochs = many").is_err());
    }

    #[test]
    fn autoencoder_defaults_to_layer_three() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("task", "autoencoder").unwrap();
        assert_eq!(cfg.target(), Target::Layer(3));
        cfg.set("layer", "output").unwrap();
        assert_eq!(cfg.target(), Target::Output);
    }

    #[test]
    fn weight_penalties_ignore_the_layer() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("reg", "l2w").unwrap();
        assert_eq!(cfg.target(), Target::AllWeights);
    }

    #[test]
    fn validation_rejects_bad_values() {
        for (k, v) in [("lr", "0"), ("epochs", "0"), ("grid", ""), ("lambda", "-1"), ("threads", "0"), ("layer", "0")] {
            let mut cfg = ExperimentConfig::default();
            let rejected = cfg.set(k, v).is_err() || cfg.validate().is_err();
            assert!(rejected, "{k} = {v}");
        }
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        b.threads = 4;
        assert_eq!(a.hash(), b.hash());
        b.lr = 1e-3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_sorted_and_deduplicated() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("grid", "10 1 0.1 1").unwrap();
        assert_eq!(cfg.sorted_grid(), vec![0.1, 1.0, 10.0]);
    }
}
