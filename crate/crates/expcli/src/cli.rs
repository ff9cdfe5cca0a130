//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use repshape::checkpoint;
use repshape::{Capture, RegularizerKind, Target};

use crate::analysis::{analyze, AnalysisOptions};
use crate::config::{ExperimentConfig, Task};
use crate::error::CliError;
use crate::experiment::{lambda_sweep, layer_sweep, layer_targets, load_splits, run_final, FinalRuns, Sweep};
use crate::output::{jsonl_bytes, write_atomic, write_json};
use crate::reports::{runs_table, summary_table, sweep_table};

#[derive(Debug, Parser)]
#[command(name = "repshape", version, about = "Representation-regularizer experiments on dense networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select λ from the grid on the validation split.
    Sweep(Common),
    /// Repeated seeded runs at a fixed or swept λ, scored on the test split.
    Train(Common),
    /// Repeated runs with the penalty on each layer in turn.
    Layers(Common),
    /// `train` for the reconstruction task.
    Autoencoder(Common),
    /// Export metrics, PCA and raw activations of one layer of a checkpoint.
    Analyze(AnalyzeArgs),
}

/// Flags shared by every subcommand. Each maps onto a config key and
/// overrides the config file; `--set key=value` reaches the rest.
#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    /// mnist-mlp, autoencoder or blobs.
    #[arg(long)]
    pub task: Option<String>,
    /// none, cr, cw-cr, vr, cw-vr, l1r, l1w or l2w.
    #[arg(long)]
    pub reg: Option<String>,
    /// Fixed penalty weight; omit to select from the grid.
    #[arg(long)]
    pub lambda: Option<String>,
    /// 1-based layer or `output`.
    #[arg(long)]
    pub layer: Option<String>,
    /// pre or post (ReLU).
    #[arg(long)]
    pub capture: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub repetitions: Option<String>,
    /// Training-set size condition, e.g. `1k`.
    #[arg(long)]
    pub train_size: Option<String>,
    #[arg(long)]
    pub data_dir: Option<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// train, validation or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Analyze only the first N samples of the split.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
}

impl Common {
    pub fn resolve(&self, task: Option<Task>) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("seed", &self.seed),
            ("out", &self.out),
            ("threads", &self.threads),
            ("task", &self.task),
            ("reg", &self.reg),
            ("lambda", &self.lambda),
            ("layer", &self.layer),
            ("capture", &self.capture),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("optimizer", &self.optimizer),
            ("batch_size", &self.batch_size),
            ("repetitions", &self.repetitions),
            ("train_size", &self.train_size),
            ("mnist_dir", &self.data_dir),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for pair in &self.set {
            cfg.apply_override(pair)?;
        }
        if let Some(task) = task {
            cfg.task = task;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    let (common, task) = match command {
        Command::Sweep(c) | Command::Train(c) | Command::Layers(c) => (c, None),
        Command::Autoencoder(c) => (c, Some(Task::Autoencoder)),
        Command::Analyze(a) => (&a.common, None),
    };
    let cfg = common.resolve(task)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Sweep(_) => sweep(&cfg),
        Command::Train(_) | Command::Autoencoder(_) => train(&cfg),
        Command::Layers(_) => layers(&cfg),
        Command::Analyze(a) => analyze_checkpoint(&cfg, a),
    })
}

fn write_sweep(cfg: &ExperimentConfig, sweep: &Sweep) -> Result<(), CliError> {
    sweep_table(sweep).write(&cfg.out.join("sweep.csv"))?;
    write_atomic(&cfg.out.join("sweep_runs.jsonl"), &jsonl_bytes(sweep.points.iter().map(|p| &p.record)))?;
    write_json(&cfg.out.join("selection.json"), &serde_json::json!({
        "kind": sweep.kind.name(),
        "target": sweep.target,
        "selected_lambda": sweep.selected,
        "config_hash": cfg.hash(),
    }))
}

fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let splits = load_splits(cfg)?;
    let sweep = lambda_sweep(cfg, &splits)?;
    write_sweep(cfg, &sweep)?;
    let lambda = sweep.selection()?;
    println!("{} at layer {}: λ = {lambda}", cfg.kind, sweep.target);
    Ok(())
}

/// The configured λ, or the sweep's choice (with its report written out).
fn choose_lambda(cfg: &ExperimentConfig, splits: &repshape::data::Splits) -> Result<f64, CliError> {
    if cfg.kind == RegularizerKind::None {
        return Ok(0.0);
    }
    if let Some(l) = cfg.lambda {
        return Ok(l);
    }
    let sweep = lambda_sweep(cfg, splits)?;
    write_sweep(cfg, &sweep)?;
    sweep.selection()
}

fn write_runs(cfg: &ExperimentConfig, finals: &[FinalRuns]) -> Result<(), CliError> {
    let records: Vec<_> = finals.iter().flat_map(FinalRuns::records).collect();
    runs_table(records.iter().copied()).write(&cfg.out.join("runs.csv"))?;
    write_atomic(&cfg.out.join("runs.jsonl"), &jsonl_bytes(records.iter().copied()))
}

fn save_checkpoints(dir: &Path, finals: &FinalRuns) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for run in finals.runs.iter().filter(|r| r.record.diverged.is_none()) {
        checkpoint::save(&run.network, &dir.join(format!("seed-{}.rshp", run.record.seed)))?;
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let splits = load_splits(cfg)?;
    let lambda = choose_lambda(cfg, &splits)?;
    let finals = run_final(cfg, lambda, cfg.target(), &splits)?;
    write_runs(cfg, std::slice::from_ref(&finals))?;
    summary_table(cfg.task, cfg.kind.name(), std::slice::from_ref(&finals)).write(&cfg.out.join("summary.csv"))?;
    save_checkpoints(&cfg.out.join("checkpoints"), &finals)?;
    if finals.summary.all_diverged() {
        return Err(CliError::Diverged(format!("all {} runs diverged at λ = {lambda}", finals.runs.len())));
    }
    println!(
        "{} {} λ={} layer {}: {} {}",
        cfg.task,
        cfg.kind,
        lambda,
        finals.target,
        crate::experiment::metric_name(cfg.task),
        finals.summary.formatted(cfg.task)
    );
    Ok(())
}

fn layers(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let splits = load_splits(cfg)?;
    let lambda = choose_lambda(cfg, &splits)?;
    let targets = if cfg.kind.is_weight() { vec![Target::AllWeights] } else { layer_targets(cfg, &splits)? };
    let finals = layer_sweep(cfg, lambda, &targets, &splits)?;
    write_runs(cfg, &finals)?;
    summary_table(cfg.task, cfg.kind.name(), &finals).write(&cfg.out.join("layers.csv"))?;
    if finals.iter().all(|f| f.summary.all_diverged()) {
        return Err(CliError::Diverged(format!("every layer diverged at λ = {lambda}")));
    }
    for f in &finals {
        println!("layer {:>6}: {}", f.target.to_string(), f.summary.formatted(cfg.task));
    }
    Ok(())
}

fn analyze_checkpoint(cfg: &ExperimentConfig, args: &AnalyzeArgs) -> Result<(), CliError> {
    let net = checkpoint::load(&args.checkpoint)
        .map_err(|e| CliError::Config(format!("cannot load checkpoint {}: {e}", args.checkpoint.display())))?;
    let splits = load_splits(cfg)?;
    let data = match args.split.as_str() {
        "train" => splits.train,
        "validation" | "val" => splits.validation,
        "test" => splits.test,
        other => return Err(CliError::Config(format!("unknown split {other:?}"))),
    };
    let data = match args.samples {
        Some(n) => data.range(0, n.min(data.len())),
        None => data,
    };
    let opts = AnalysisOptions {
        target: cfg.target.unwrap_or_else(|| cfg.task.default_target()),
        capture: cfg.capture,
        components: args.components,
        pairs: args.pairs,
        pair_seed: cfg.seed,
    };
    let analysis = analyze(&net, &data, &opts)?;
    let written = analysis.write(&cfg.out)?;
    info!("wrote {} files to {}", written.len(), cfg.out.display());
    let c = &analysis.characteristics;
    println!(
        "layer {} ({}): amplitude {:.4}, covariance {:.4}, correlation {:?}, variance {:.4}, n_cw_variance {:.4}",
        analysis.layer,
        match analysis.capture {
            Capture::Pre => "pre-ReLU",
            Capture::Post => "post-ReLU",
        },
        c.activation_amplitude,
        c.covariance,
        c.correlation,
        c.variance,
        c.n_cw_variance
    );
    Ok(())
}
