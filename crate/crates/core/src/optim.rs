//! First-order optimizers holding per-parameter state for one network.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    /// Classical (heavy-ball) momentum.
    Momentum { momentum: f64 },
    RmsProp { decay: f64, eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn momentum() -> Self {
        Self::Momentum { momentum: 0.9 }
    }

    pub fn rmsprop() -> Self {
        Self::RmsProp { decay: 0.9, eps: 1e-8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Momentum { .. } => "momentum",
            Self::RmsProp { .. } => "rmsprop",
            Self::Adam { .. } => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::adam()),
            "momentum" => Ok(Self::momentum()),
            "rmsprop" => Ok(Self::rmsprop()),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.parameters().iter().map(|p| vec![0.0; p.len()]).collect();
        Self { kind, lr, steps: 0, first: zeros.clone(), second: zeros }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let grads = grads.slices();
        let mut params = net.parameters_mut();
        if grads.len() != params.len() || grads.iter().zip(&params).any(|(g, p)| g.len() != p.len()) {
            return Err(Error::Shape("gradients do not match network parameters".into()));
        }
        self.steps += 1;
        let lr = self.lr;
        let t = self.steps as i32;
        for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in param.iter_mut().zip(grad) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Momentum { momentum } => {
                    for ((p, g), vel) in param.iter_mut().zip(grad).zip(m.iter_mut()) {
                        *vel = momentum * *vel + g;
                        *p -= lr * *vel;
                    }
                }
                OptimizerKind::RmsProp { decay, eps } => {
                    for ((p, g), ms) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
                        *ms = decay * *ms + (1.0 - decay) * g * g;
                        *p -= lr * g / (ms.sqrt() + eps);
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((p, g), m1), m2) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                        *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                        *p -= lr * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
                    }
                }
            }
        }
        drop(params);
        if !net.is_finite() {
            return Err(Error::NonFinite(format!("parameters after step {}", self.steps)));
        }
        Ok(())
    }
}
