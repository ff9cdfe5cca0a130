//! Representation analysis of a trained network: characteristic metrics,
//! principal components, and raw activations for histograms and scatter plots.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repshape::data::Dataset;
use repshape::net::Network;
use repshape::stats::{characteristics, pca, ActivationBatch, RepCharacteristics};
use repshape::{Capture, Error, Matrix, Target};

use crate::error::CliError;
use crate::output::{fmt_opt, write_atomic, CsvTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub target: Target,
    pub capture: Capture,
    pub components: usize,
    /// Number of random unit pairs exported for scatter plots.
    pub pairs: usize,
    pub pair_seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { target: Target::Layer(5), capture: Capture::Post, components: 3, pairs: 1, pair_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// 1-based layer index.
    pub layer: usize,
    pub capture: Capture,
    pub characteristics: RepCharacteristics,
    /// `N x components`; columns past the data's rank are zero.
    pub projection: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub activations: Matrix,
    pub labels: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn analyze(net: &Network, data: &Dataset, opts: &AnalysisOptions) -> Result<Analysis, CliError> {
    if opts.target == Target::AllWeights {
        return Err(CliError::Config("analysis needs a single layer".into()));
    }
    let l = net.resolve_target(opts.target)?;
    if data.is_empty() {
        return Err(CliError::Config("cannot analyze an empty split".into()));
    }
    let trace = net.propagate(data.inputs())?;
    let activations = trace.layer(l, opts.capture).clone();
    let batch = ActivationBatch::new(activations, data.labels().to_vec(), data.num_classes())?;
    let chars = characteristics(&batch)?;

    let (n, units) = batch.values().shape();
    let components = opts.components.min(n).min(units);
    let mut projection = Matrix::zeros(n, opts.components);
    let (mut explained_variance, mut explained_ratio) = (vec![0.0; opts.components], vec![0.0; opts.components]);
    if components > 0 {
        match pca(&batch, components) {
            Ok(p) => {
                for r in 0..n {
                    projection.row_mut(r)[..p.projection.cols()].copy_from_slice(p.projection.row(r));
                }
                explained_variance[..p.explained_variance.len()].copy_from_slice(&p.explained_variance);
                explained_ratio[..p.explained_ratio.len()].copy_from_slice(&p.explained_ratio);
            }
            // a dead layer has nothing to project; keep the zeros
            Err(Error::Config(msg)) if msg.contains("zero total variance") => {}
            Err(e) => return Err(e.into()),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.pair_seed);
    let pairs = if units >= 2 {
        (0..opts.pairs)
            .map(|_| {
                let pick = sample(&mut rng, units, 2);
                (pick.index(0), pick.index(1))
            })
            .collect()
    } else {
        vec![]
    };

    Ok(Analysis {
        layer: l + 1,
        capture: opts.capture,
        characteristics: chars,
        projection,
        explained_variance,
        explained_ratio,
        activations: batch.values().clone(),
        labels: batch.labels().to_vec(),
        pairs,
    })
}

pub const METRICS_HEADER: [&str; 10] = [
    "layer",
    "capture",
    "samples",
    "units",
    "activation_amplitude",
    "covariance",
    "correlation",
    "cw_correlation",
    "variance",
    "n_cw_variance",
];

impl Analysis {
    pub fn metrics_table(&self) -> CsvTable {
        let c = &self.characteristics;
        let mut t = CsvTable::new(&METRICS_HEADER);
        t.push(vec![
            self.layer.to_string(),
            self.capture.to_string(),
            self.activations.rows().to_string(),
            self.activations.cols().to_string(),
            c.activation_amplitude.to_string(),
            c.covariance.to_string(),
            fmt_opt(c.correlation),
            fmt_opt(c.cw_correlation),
            c.variance.to_string(),
            c.n_cw_variance.to_string(),
        ]);
        t
    }

    /// `pc1..pcK,label`
    pub fn pca_table(&self) -> CsvTable {
        let mut header: Vec<String> = (1..=self.projection.cols()).map(|k| format!("pc{k}")).collect();
        header.push("label".into());
        let mut t = CsvTable::from_header(header);
        for (r, label) in self.labels.iter().enumerate() {
            let mut row: Vec<String> = self.projection.row(r).iter().map(f64::to_string).collect();
            row.push(label.to_string());
            t.push(row);
        }
        t
    }

    /// `component,variance,ratio`
    pub fn pca_variance_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["component", "variance", "ratio"]);
        for (k, (v, r)) in self.explained_variance.iter().zip(&self.explained_ratio).enumerate() {
            t.push(vec![(k + 1).to_string(), v.to_string(), r.to_string()]);
        }
        t
    }

    /// `u0..u{I-1},label`, one row per sample.
    pub fn activations_table(&self) -> CsvTable {
        let mut header: Vec<String> = (0..self.activations.cols()).map(|i| format!("u{i}")).collect();
        header.push("label".into());
        let mut t = CsvTable::from_header(header);
        for (r, label) in self.labels.iter().enumerate() {
            let mut row: Vec<String> = self.activations.row(r).iter().map(f64::to_string).collect();
            row.push(label.to_string());
            t.push(row);
        }
        t
    }

    /// `pair,unit_a,unit_b,value_a,value_b,label`, one row per pair and sample.
    pub fn pairs_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["pair", "unit_a", "unit_b", "value_a", "value_b", "label"]);
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            for (r, label) in self.labels.iter().enumerate() {
                t.push(vec![
                    p.to_string(),
                    a.to_string(),
                    b.to_string(),
                    self.activations.get(r, a).to_string(),
                    self.activations.get(r, b).to_string(),
                    label.to_string(),
                ]);
            }
        }
        t
    }

    /// Writes `metrics.csv`, `pca.csv`, `pca_variance.csv`, `activations.csv`
    /// and `pairs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let files = [
            ("metrics.csv", self.metrics_table()),
            ("pca.csv", self.pca_table()),
            ("pca_variance.csv", self.pca_variance_table()),
            ("activations.csv", self.activations_table()),
            ("pairs.csv", self.pairs_table()),
        ];
        files
            .into_iter()
            .map(|(name, table)| {
                let path = dir.join(name);
                write_atomic(&path, &table.to_bytes()?)?;
                Ok(path)
            })
            .collect()
    }
}
