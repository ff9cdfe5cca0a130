//! Penalty losses on layer representations and weights, with analytical
//! gradients, and their combination with the task loss as `J + lambda * Omega`.
//!
//! Representation penalties, for a batch of `N` samples over `I` units and `K`
//! classes (pair sums run over unordered pairs `i < j`):
//!
//! ```text
//! CR     = 2/(I(I-1))  sum_{i<j} c_{i,j}^2
//! cw-CR  = 2/(KI(I-1)) sum_k sum_{i<j} (c^k_{i,j})^2
//! VR     = 1/I         sum_i v_i
//! cw-VR  = 1/(KI)      sum_k sum_i v^k_i
//! L1R    = 1/(NI)      sum_n sum_i |z_{i,n}|
//!
//! dCR/dz_{i,n}    = 4/(NI(I-1))      sum_{j!=i} c_{i,j} (z_{j,n} - mu_j)
//! dcwCR/dz_{i,n}  = 4/(KI(I-1)|S_k|) sum_{j!=i} c^k_{i,j} (z_{j,n} - mu^k_j),  n in S_k
//! dVR/dz_{i,n}    = 2/(NI)      (z_{i,n} - mu_i)
//! dcwVR/dz_{i,n}  = 2/(KI|S_k|) (z_{i,n} - mu^k_i),  n in S_k
//! ```
//!
//! For the class-wise kinds `K` counts only the classes that contribute: those
//! with at least two samples for cw-CR and at least one for cw-VR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean_and_cov, partition, ActivationBatch};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegularizerKind {
    None,
    Cr,
    CwCr,
    Vr,
    CwVr,
    L1r,
    L1w,
    L2w,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 8] = [
        Self::None,
        Self::Cr,
        Self::CwCr,
        Self::Vr,
        Self::CwVr,
        Self::L1r,
        Self::L1w,
        Self::L2w,
    ];

    /// Penalizes activations of one layer.
    pub fn is_representation(self) -> bool {
        matches!(self, Self::Cr | Self::CwCr | Self::Vr | Self::CwVr | Self::L1r)
    }

    /// Penalizes the weights of every layer.
    pub fn is_weight(self) -> bool {
        matches!(self, Self::L1w | Self::L2w)
    }

    pub fn is_class_wise(self) -> bool {
        matches!(self, Self::CwCr | Self::CwVr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Cr => "cr",
            Self::CwCr => "cw-cr",
            Self::Vr => "vr",
            Self::CwVr => "cw-vr",
            Self::L1r => "l1r",
            Self::L1w => "l1w",
            Self::L2w => "l2w",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('-', "") == norm)
            .or(match norm.as_str() {
                "baseline" => Some(Self::None),
                "decov" => Some(Self::Cr),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown regularizer '{s}'")))
    }
}

/// Where a representation penalty reads its activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    /// 1-based layer index; the last layer is the network output.
    Layer(usize),
    /// The output layer (pre-softmax logits for a classifier).
    Output,
    /// Every weight matrix (L1W/L2W).
    AllWeights,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Layer(l) => write!(f, "{l}"),
            Target::Output => f.write_str("output"),
            Target::AllWeights => f.write_str("all-weights"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "output" | "out" => Ok(Target::Output),
            "all" | "all-weights" | "weights" => Ok(Target::AllWeights),
            other => match other.parse::<usize>() {
                Ok(l) if l >= 1 => Ok(Target::Layer(l)),
                _ => Err(Error::Config(format!("bad target layer '{s}'"))),
            },
        }
    }
}

/// Whether a hidden layer's activations are taken before or after the ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Capture {
    Pre,
    #[default]
    Post,
}

impl FromStr for Capture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pre" => Ok(Capture::Pre),
            "post" => Ok(Capture::Post),
            _ => Err(Error::Config(format!("capture must be 'pre' or 'post', got '{s}'"))),
        }
    }
}

impl fmt::Display for Capture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capture::Pre => "pre",
            Capture::Post => "post",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub target: Target,
    pub capture: Capture,
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self { kind: RegularizerKind::None, lambda: 0.0, target: Target::Output, capture: Capture::Post }
    }

    pub fn new(kind: RegularizerKind, lambda: f64, target: Target) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be a finite non-negative number, got {lambda}")));
        }
        let target = if kind.is_weight() { Target::AllWeights } else { target };
        if kind.is_representation() && target == Target::AllWeights {
            return Err(Error::Config(format!("{kind} needs a layer target")));
        }
        Ok(Self { kind, lambda, target, capture: Capture::Post })
    }

    pub fn with_capture(mut self, capture: Capture) -> Self {
        self.capture = capture;
        self
    }

    /// False for `None` and for a zero weight; such specs leave training untouched.
    pub fn is_active(&self) -> bool {
        self.kind != RegularizerKind::None && self.lambda > 0.0
    }
}

/// A penalty value and its gradient with respect to the penalized batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyResult {
    pub omega: f64,
    pub grad: Matrix,
    /// Set when no class had enough samples to contribute.
    pub degenerate: bool,
}

fn centered_rows(values: &Matrix, mean: &[f64]) -> Matrix {
    let mut out = values.clone();
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    out
}

/// Sum of squared off-diagonal entries over unordered pairs, and the covariance
/// with its diagonal zeroed.
fn off_diagonal(cov: &Matrix) -> (f64, Matrix) {
    let units = cov.rows();
    let mut off = cov.clone();
    let mut sq = 0.0;
    for i in 0..units {
        off.set(i, i, 0.0);
        for j in (i + 1)..units {
            sq += cov.get(i, j) * cov.get(i, j);
        }
    }
    (sq, off)
}

fn require_pairs(batch: &ActivationBatch, what: &str) -> Result<()> {
    if batch.units() < 2 {
        return Err(Error::Config(format!("{what} needs at least two units, got {}", batch.units())));
    }
    Ok(())
}

pub fn penalty_cr(batch: &ActivationBatch) -> Result<PenaltyResult> {
    require_pairs(batch, "CR")?;
    if batch.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let (n, units) = (batch.samples() as f64, batch.units() as f64);
    let (mean, cov) = mean_and_cov(batch.values());
    let (sq, off) = off_diagonal(&cov);
    let omega = 2.0 / (units * (units - 1.0)) * sq;
    let grad = centered_rows(batch.values(), &mean)
        .matmul(&off)?
        .scale(4.0 / (n * units * (units - 1.0)));
    Ok(PenaltyResult { omega, grad, degenerate: false })
}

pub fn penalty_cwcr(batch: &ActivationBatch) -> Result<PenaltyResult> {
    require_pairs(batch, "cw-CR")?;
    let units = batch.units() as f64;
    let parts = partition(batch);
    let classes = parts.classes_with_at_least(2).count();
    let mut grad = Matrix::zeros(batch.samples(), batch.units());
    if classes == 0 {
        return Ok(PenaltyResult { omega: 0.0, grad, degenerate: true });
    }
    let k = classes as f64;
    let mut sq_total = 0.0;
    for (_, idx) in parts.classes_with_at_least(2) {
        let rows = batch.values().gather_rows(idx);
        let (mean, cov) = mean_and_cov(&rows);
        let (sq, off) = off_diagonal(&cov);
        sq_total += sq;
        let g = centered_rows(&rows, &mean)
            .matmul(&off)?
            .scale(4.0 / (k * units * (units - 1.0) * idx.len() as f64));
        for (r, &n) in idx.iter().enumerate() {
            grad.row_mut(n).copy_from_slice(g.row(r));
        }
    }
    let omega = 2.0 / (k * units * (units - 1.0)) * sq_total;
    Ok(PenaltyResult { omega, grad, degenerate: false })
}

pub fn penalty_vr(batch: &ActivationBatch) -> Result<PenaltyResult> {
    if batch.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let (n, units) = (batch.samples() as f64, batch.units() as f64);
    let mean = batch.values().col_means();
    let centered = centered_rows(batch.values(), &mean);
    let omega = centered.as_slice().iter().map(|d| d * d).sum::<f64>() / n / units;
    let grad = centered.scale(2.0 / (n * units));
    Ok(PenaltyResult { omega, grad, degenerate: false })
}

pub fn penalty_cwvr(batch: &ActivationBatch) -> Result<PenaltyResult> {
    if batch.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let units = batch.units() as f64;
    let parts = partition(batch);
    let k = parts.classes_with_at_least(1).count() as f64;
    let mut grad = Matrix::zeros(batch.samples(), batch.units());
    let mut var_total = 0.0;
    for (_, idx) in parts.classes_with_at_least(1) {
        let rows = batch.values().gather_rows(idx);
        let size = idx.len() as f64;
        let centered = centered_rows(&rows, &rows.col_means());
        var_total += centered.as_slice().iter().map(|d| d * d).sum::<f64>() / size;
        let scale = 2.0 / (k * units * size);
        for (r, &n) in idx.iter().enumerate() {
            for (g, d) in grad.row_mut(n).iter_mut().zip(centered.row(r)) {
                *g = scale * d;
            }
        }
    }
    let omega = var_total / (k * units);
    Ok(PenaltyResult { omega, grad, degenerate: false })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn penalty_l1r(batch: &ActivationBatch) -> Result<PenaltyResult> {
    if batch.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let count = batch.values().len() as f64;
    let omega = batch.values().as_slice().iter().map(|v| v.abs()).sum::<f64>() / count;
    let grad = batch.values().map(|v| sign(v) / count);
    Ok(PenaltyResult { omega, grad, degenerate: false })
}

/// Dispatches to the representation penalty of `kind`.
pub fn representation_penalty(kind: RegularizerKind, batch: &ActivationBatch) -> Result<PenaltyResult> {
    match kind {
        RegularizerKind::Cr => penalty_cr(batch),
        RegularizerKind::CwCr => penalty_cwcr(batch),
        RegularizerKind::Vr => penalty_vr(batch),
        RegularizerKind::CwVr => penalty_cwvr(batch),
        RegularizerKind::L1r => penalty_l1r(batch),
        other => Err(Error::Config(format!("{other} is not a representation penalty"))),
    }
}

/// Weight-decay penalty over every weight matrix, normalized by the total
/// number of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPenalty {
    pub omega: f64,
    /// One gradient per weight matrix, same shapes and order as the input.
    pub grads: Vec<Matrix>,
}

pub fn penalty_weight(kind: RegularizerKind, weights: &[&Matrix]) -> Result<WeightPenalty> {
    let count: usize = weights.iter().map(|w| w.len()).sum();
    if count == 0 {
        return Ok(WeightPenalty { omega: 0.0, grads: weights.iter().map(|w| (*w).clone()).collect() });
    }
    let count = count as f64;
    let (omega, grads) = match kind {
        RegularizerKind::L2w => (
            weights.iter().flat_map(|w| w.as_slice()).map(|v| v * v).sum::<f64>() / count,
            weights.iter().map(|w| w.map(|v| 2.0 * v / count)).collect(),
        ),
        RegularizerKind::L1w => (
            weights.iter().flat_map(|w| w.as_slice()).map(|v| v.abs()).sum::<f64>() / count,
            weights.iter().map(|w| w.map(|v| sign(v) / count)).collect(),
        ),
        other => return Err(Error::Config(format!("{other} is not a weight penalty"))),
    };
    Ok(WeightPenalty { omega, grads })
}

/// Task loss, weighted penalty, and their sum for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub task: f64,
    /// `lambda * Omega`.
    pub penalty: f64,
    pub total: f64,
}

impl Cost {
    /// A non-finite total means training has diverged.
    pub fn diverged(&self) -> bool {
        !self.total.is_finite()
    }
}

pub fn total_cost(task_loss: f64, spec: &RegularizerSpec, omega: f64) -> Cost {
    if !spec.is_active() {
        return Cost { task: task_loss, penalty: 0.0, total: task_loss };
    }
    let penalty = spec.lambda * omega;
    Cost { task: task_loss, penalty, total: task_loss + penalty }
}
