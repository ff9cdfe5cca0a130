//! Fully connected feedforward networks with a softmax cross-entropy or L2
//! reconstruction head, and backpropagation of `J + lambda * Omega`.
//!
//! Layer `l` computes `pre_l = post_{l-1} * W_l + b_l` and `post_l = act(pre_l)`,
//! with `W_l` stored `in x out`. Hidden layers use ReLU; the last layer is linear.
//! Layers are numbered from 1 when addressed through [`Target::Layer`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizers::{
    penalty_weight, representation_penalty, total_cost, Capture, Cost, RegularizerSpec, Target,
};
use crate::stats::ActivationBatch;
use crate::tensor::{relu, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskHead {
    /// Mean cross-entropy of the softmax of the output against class labels.
    SoftmaxCrossEntropy,
    /// Mean squared error between the output and the input.
    L2Reconstruction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weights.cols()
    }
}

/// Hidden widths of the default classifier: six layers of 100 units.
pub const MLP_HIDDEN: [usize; 6] = [100; 6];
/// Widths of the default autoencoder from input to reconstruction.
pub const AUTOENCODER_WIDTHS: [usize; 7] = [784, 400, 200, 100, 200, 400, 784];

/// A mini-batch of inputs with their class labels.
///
/// Labels drive the cross-entropy head and the class-wise penalties; the
/// reconstruction head only uses them for the penalties.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a Matrix,
    pub labels: &'a [usize],
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    head: TaskHead,
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: TaskHead) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} units but layer {} takes {}",
                    l + 1,
                    pair[0].output_width(),
                    l + 2,
                    pair[1].input_width()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_width() {
                return Err(Error::Shape(format!("layer {} bias length {}", l + 1, layer.bias.len())));
            }
        }
        Ok(Self { layers, head })
    }

    /// Glorot-uniform initialized network with ReLU hidden layers and a linear
    /// output. `widths` runs from input to output.
    pub fn init(widths: &[usize], head: TaskHead, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
                Layer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer"),
                    bias: vec![0.0; fan_out],
                    activation: if l == last { Activation::Identity } else { Activation::Relu },
                }
            })
            .collect();
        Self::new(layers, head)
    }

    /// Classifier with the given hidden widths.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        Self::init(&widths, TaskHead::SoftmaxCrossEntropy, seed)
    }

    /// The default 784 -> 100x6 -> 10 MNIST classifier.
    pub fn default_mlp(seed: u64) -> Self {
        Self::mlp(784, &MLP_HIDDEN, 10, seed).expect("valid default widths")
    }

    pub fn autoencoder(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.first() != widths.last() {
            return Err(Error::Config("autoencoder must reconstruct its input width".into()));
        }
        Self::init(widths, TaskHead::L2Reconstruction, seed)
    }

    pub fn default_autoencoder(seed: u64) -> Self {
        Self::autoencoder(&AUTOENCODER_WIDTHS, seed).expect("valid default widths")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> TaskHead {
        self.head
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.layers.iter().map(Layer::output_width)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Zero-based index of the layer addressed by `target`.
    pub fn resolve_target(&self, target: Target) -> Result<usize> {
        match target {
            Target::Output => Ok(self.layers.len() - 1),
            Target::Layer(l) if (1..=self.layers.len()).contains(&l) => Ok(l - 1),
            Target::Layer(l) => Err(Error::Config(format!(
                "layer {l} out of range for a {}-layer network",
                self.layers.len()
            ))),
            Target::AllWeights => Err(Error::Config("all-weights is not a single layer".into())),
        }
    }

    /// Runs the layers without computing a loss.
    pub fn propagate(&self, inputs: &Matrix) -> Result<ForwardTrace> {
        if inputs.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input width {} but network expects {}",
                inputs.cols(),
                self.input_width()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l == 0 { inputs } else { &post[l - 1] };
            let mut z = x.matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias)?;
            let a = match layer.activation {
                Activation::Relu => z.map(relu),
                Activation::Identity => z.clone(),
            };
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("activations of layer {}", l + 1)));
            }
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { input: inputs.clone(), pre, post, task_loss: f64::NAN })
    }

    /// Forward pass including the task loss `J`.
    pub fn forward(&self, batch: &Batch<'_>) -> Result<ForwardTrace> {
        let mut trace = self.propagate(batch.inputs)?;
        trace.task_loss = task_loss(self.head, trace.output(), batch)?.0;
        Ok(trace)
    }

    /// Representation penalty value at the spec's target, without gradients.
    fn penalty_value(&self, trace: &ForwardTrace, batch: &Batch<'_>, spec: &RegularizerSpec) -> Result<f64> {
        if !spec.is_active() {
            return Ok(0.0);
        }
        if spec.kind.is_weight() {
            let weights: Vec<&Matrix> = self.layers.iter().map(|l| &l.weights).collect();
            return Ok(penalty_weight(spec.kind, &weights)?.omega);
        }
        let l = self.resolve_target(spec.target)?;
        let z = trace.layer(l, spec.capture);
        let act = ActivationBatch::new(z.clone(), batch.labels.to_vec(), batch.num_classes)?;
        Ok(representation_penalty(spec.kind, &act)?.omega)
    }

    /// `J`, `lambda * Omega` and their sum for one batch.
    pub fn objective(&self, batch: &Batch<'_>, spec: &RegularizerSpec) -> Result<Cost> {
        let trace = self.forward(batch)?;
        let omega = self.penalty_value(&trace, batch, spec)?;
        Ok(total_cost(trace.task_loss, spec, omega))
    }

    /// Parameter gradients of `J + lambda * Omega` for the batch that produced `trace`.
    pub fn backward(&self, trace: &ForwardTrace, batch: &Batch<'_>, spec: &RegularizerSpec) -> Result<Backward> {
        let (task, mut delta) = task_loss(self.head, trace.output(), batch)?;

        let mut omega = 0.0;
        let mut degenerate = false;
        let mut injected: Option<(usize, Matrix)> = None;
        let mut weight_grads: Option<Vec<Matrix>> = None;
        if spec.is_active() {
            if spec.kind.is_weight() {
                let weights: Vec<&Matrix> = self.layers.iter().map(|l| &l.weights).collect();
                let p = penalty_weight(spec.kind, &weights)?;
                omega = p.omega;
                weight_grads = Some(p.grads);
            } else {
                let l = self.resolve_target(spec.target)?;
                let act = ActivationBatch::new(
                    trace.layer(l, spec.capture).clone(),
                    batch.labels.to_vec(),
                    batch.num_classes,
                )?;
                let p = representation_penalty(spec.kind, &act)?;
                omega = p.omega;
                degenerate = p.degenerate;
                injected = Some((l, p.grad));
            }
        }

        let n_layers = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n_layers];
        let mut biases = vec![Vec::new(); n_layers];
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            // delta holds dJ~/d post_l here
            if let Some((t, g)) = &injected {
                if *t == l && (spec.capture == Capture::Post || layer.activation == Activation::Identity) {
                    delta.add_scaled(g, spec.lambda)?;
                }
            }
            if layer.activation == Activation::Relu {
                delta = delta.zip_map(&trace.pre[l], |d, z| if z > 0.0 { d } else { 0.0 })?;
                if let Some((t, g)) = &injected {
                    if *t == l && spec.capture == Capture::Pre {
                        delta.add_scaled(g, spec.lambda)?;
                    }
                }
            }
            let input = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let mut gw = input.t_matmul(&delta)?;
            if let Some(wg) = &weight_grads {
                gw.add_scaled(&wg[l], spec.lambda)?;
            }
            weights[l] = gw;
            biases[l] = delta.col_sums();
            if l > 0 {
                delta = delta.matmul_t(&layer.weights)?;
            }
        }

        Ok(Backward {
            cost: total_cost(task, spec, omega),
            omega,
            degenerate,
            grads: Gradients { weights, biases },
        })
    }

    /// Forward and backward for one batch.
    pub fn gradients(&self, batch: &Batch<'_>, spec: &RegularizerSpec) -> Result<Backward> {
        let trace = self.forward(batch)?;
        self.backward(&trace, batch, spec)
    }

    /// Flat views of all parameters, weights then bias per layer.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect()
    }

    /// Predicted classes, evaluated in chunks of `chunk` rows.
    pub fn predict(&self, inputs: &Matrix, chunk: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(inputs.rows());
        for start in (0..inputs.rows()).step_by(chunk.max(1)) {
            let end = (start + chunk.max(1)).min(inputs.rows());
            let trace = self.propagate(&inputs.slice_rows(start, end))?;
            let logits = trace.output();
            out.extend((0..logits.rows()).map(|r| argmax(logits.row(r))));
        }
        Ok(out)
    }

    /// Misclassification rate in percent.
    pub fn classification_error(&self, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
        let predicted = self.predict(inputs, 1000)?;
        let wrong = predicted.iter().zip(labels).filter(|(p, l)| p != l).count();
        Ok(100.0 * wrong as f64 / labels.len().max(1) as f64)
    }

    /// Mean squared reconstruction error per input feature.
    pub fn reconstruction_mse(&self, inputs: &Matrix) -> Result<f64> {
        let mut total = 0.0;
        for start in (0..inputs.rows()).step_by(1000) {
            let end = (start + 1000).min(inputs.rows());
            let x = inputs.slice_rows(start, end);
            let trace = self.propagate(&x)?;
            total += trace
                .output()
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>();
        }
        Ok(total / inputs.len().max(1) as f64)
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Task loss and its gradient with respect to the network output.
pub fn task_loss(head: TaskHead, output: &Matrix, batch: &Batch<'_>) -> Result<(f64, Matrix)> {
    let n = output.rows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    match head {
        TaskHead::SoftmaxCrossEntropy => {
            if batch.labels.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} outputs", batch.labels.len())));
            }
            let mut grad = Matrix::zeros(n, output.cols());
            let mut loss = 0.0;
            for (r, &label) in batch.labels.iter().enumerate() {
                if label >= output.cols() {
                    return Err(Error::Config(format!("label {label} with {} outputs", output.cols())));
                }
                let row = output.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                let log_norm = max + sum.ln();
                loss += log_norm - row[label];
                for (g, &v) in grad.row_mut(r).iter_mut().zip(row) {
                    *g = (v - log_norm).exp() / n as f64;
                }
                grad.row_mut(r)[label] -= 1.0 / n as f64;
            }
            Ok((loss / n as f64, grad))
        }
        TaskHead::L2Reconstruction => {
            if batch.inputs.shape() != output.shape() {
                return Err(Error::Shape("reconstruction shape differs from input".into()));
            }
            let count = output.len() as f64;
            let diff = output.sub(batch.inputs)?;
            let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
            Ok((loss, diff.scale(2.0 / count)))
        }
    }
}

/// Activations of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
    /// `J`; NaN when produced by [`Network::propagate`].
    pub task_loss: f64,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.post[self.post.len() - 1]
    }

    /// Activations of zero-based layer `l` before or after its nonlinearity.
    pub fn layer(&self, l: usize, capture: Capture) -> &Matrix {
        match capture {
            Capture::Pre => &self.pre[l],
            Capture::Post => &self.post[l],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Flat views in the same order as [`Network::parameters`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.as_slice(), b.as_slice()]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub cost: Cost,
    /// Unweighted penalty value.
    pub omega: f64,
    pub degenerate: bool,
    pub grads: Gradients,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::RegularizerKind;

    fn tiny_batch() -> (Matrix, Vec<usize>) {
        let x = Matrix::from_rows(&[
            [0.1, 0.9, 0.3, 0.5],
            [0.8, 0.2, 0.7, 0.1],
            [0.4, 0.4, 0.9, 0.6],
            [0.0, 0.3, 0.2, 1.0],
            [0.6, 0.7, 0.5, 0.3],
        ])
        .unwrap();
        (x, vec![0, 1, 1, 0, 1])
    }

    #[test]
    fn default_architectures() {
        let mlp = Network::default_mlp(1);
        assert_eq!(mlp.widths(), vec![784, 100, 100, 100, 100, 100, 100, 10]);
        assert!(mlp.layers()[..6].iter().all(|l| l.activation == Activation::Relu));
        assert_eq!(mlp.layers()[6].activation, Activation::Identity);
        assert_eq!(mlp.head(), TaskHead::SoftmaxCrossEntropy);

        let ae = Network::default_autoencoder(1);
        assert_eq!(ae.widths(), AUTOENCODER_WIDTHS.to_vec());
        assert_eq!(ae.head(), TaskHead::L2Reconstruction);
        assert_eq!(ae.layers()[2].output_width(), 100);
        assert_eq!(ae.layers()[5].activation, Activation::Identity);
    }

    #[test]
    fn init_respects_glorot_limit() {
        let net = Network::mlp(30, &[20], 5, 3).unwrap();
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(net.layers()[0].weights.as_slice().iter().all(|w| w.abs() < limit));
        assert_eq!(Network::mlp(30, &[20], 5, 3).unwrap(), net);
        assert_ne!(Network::mlp(30, &[20], 5, 4).unwrap(), net);
    }

    #[test]
    fn rejects_broken_chains() {
        let a = Layer { weights: Matrix::zeros(3, 2), bias: vec![0.0; 2], activation: Activation::Relu };
        let b = Layer { weights: Matrix::zeros(3, 1), bias: vec![0.0; 1], activation: Activation::Identity };
        assert!(Network::new(vec![a, b], TaskHead::SoftmaxCrossEntropy).is_err());
        assert!(Network::init(&[4], TaskHead::SoftmaxCrossEntropy, 0).is_err());
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let w = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap();
        let layer = Layer { weights: w.clone(), bias: vec![0.25, -0.5], activation: Activation::Identity };
        let net = Network::new(vec![layer], TaskHead::SoftmaxCrossEntropy).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let mut want = x.matmul(&w).unwrap();
        want.add_row_vector(&[0.25, -0.5]).unwrap();
        assert_eq!(net.propagate(&x).unwrap().output(), &want);
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let out = Matrix::zeros(3, 10);
        let x = Matrix::zeros(3, 1);
        let labels = [0, 4, 9];
        let (j, g) = task_loss(TaskHead::SoftmaxCrossEntropy, &out, &Batch { inputs: &x, labels: &labels, num_classes: 10 }).unwrap();
        assert!((j - 10f64.ln()).abs() < 1e-14);
        // (softmax - onehot) / N
        assert!((g.get(0, 0) - (0.1 - 1.0) / 3.0).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.1 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let x = Matrix::from_rows(&[[0.2, 0.4], [0.9, 0.0]]).unwrap();
        let (j, g) = task_loss(TaskHead::L2Reconstruction, &x, &Batch { inputs: &x, labels: &[0, 0], num_classes: 1 }).unwrap();
        assert_eq!(j, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lambda_matches_baseline_bitwise() {
        let net = Network::init(&[4, 3, 3, 2], TaskHead::SoftmaxCrossEntropy, 9).unwrap();
        let (x, y) = tiny_batch();
        let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
        let base = net.gradients(&batch, &RegularizerSpec::none()).unwrap();
        for kind in RegularizerKind::ALL {
            let spec = RegularizerSpec::new(kind, 0.0, Target::Layer(2)).unwrap();
            let g = net.gradients(&batch, &spec).unwrap();
            assert_eq!(g.grads, base.grads);
            assert_eq!(g.cost.total, base.cost.task);
        }
    }

    #[test]
    fn injected_term_grows_with_lambda() {
        let net = Network::init(&[4, 3, 3, 2], TaskHead::SoftmaxCrossEntropy, 2).unwrap();
        let (x, y) = tiny_batch();
        let batch = Batch { inputs: &x, labels: &y, num_classes: 2 };
        let base = net.gradients(&batch, &RegularizerSpec::none()).unwrap().grads;
        let mut last = 0.0;
        for lambda in [0.1, 1.0, 10.0] {
            let spec = RegularizerSpec::new(RegularizerKind::Vr, lambda, Target::Output).unwrap();
            let g = net.gradients(&batch, &spec).unwrap().grads;
            let diff: f64 = g.weights[2].sub(&base.weights[2]).unwrap().as_slice().iter().map(|v| v * v).sum();
            assert!(diff > last);
            last = diff;
        }
    }

    #[test]
    fn target_resolution() {
        let net = Network::default_mlp(0);
        assert_eq!(net.resolve_target(Target::Output).unwrap(), 6);
        assert_eq!(net.resolve_target(Target::Layer(5)).unwrap(), 4);
        assert!(net.resolve_target(Target::Layer(8)).is_err());
        assert!(net.resolve_target(Target::Layer(0)).is_err());
    }

    #[test]
    fn input_width_is_checked() {
        let net = Network::init(&[4, 2], TaskHead::SoftmaxCrossEntropy, 0).unwrap();
        assert!(matches!(net.propagate(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
    }
}
