//! Minimal neural-network engine for tile regression and classification.
//!
//! Two architectures share one layer stack. A GCN layer computes
//! `Â (H W) + b`; an FCN layer computes `H W + b`. Hidden layers apply ReLU,
//! the final layer emits raw values (regression) or logits (classification).
//! Gradients are derived by hand for exactly these graphs; `Â` is symmetric
//! so the backward pass reuses it in place of its transpose.

mod adam;
mod loss;
mod tensor;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{masked_cross_entropy, masked_mse, LabelSet, Targets};
pub use tensor::Matrix;
pub use train::{
    loss_and_grad, train, train_with_masking, EpochRecord, FeatureMasking, TrainConfig,
    TrainOutcome,
};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const N_CLASSES: usize = 4;
pub const FCN_HIDDEN: [usize; 3] = [256, 512, 128];
pub const GCN_HIDDEN: [usize; 1] = [64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Fcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn out_dim(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification => N_CLASSES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in_dim × out_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform Glorot initialization; biases start at zero.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Matrix::from_vec(in_dim, out_dim, data).expect("sized"),
            bias: vec![0.0; out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: Architecture,
    pub task: Task,
    pub layers: Vec<Layer>,
}

/// Intermediates kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input fed to each layer, after dropout.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
    /// Inverted-dropout multipliers applied to each layer input, if any.
    dropout: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

pub type Gradients = Vec<LayerGrad>;

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Regression(Vec<f64>),
    Classification {
        classes: Vec<usize>,
        probabilities: Vec<[f64; N_CLASSES]>,
    },
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Network {
    /// Glorot-initialized stack `in_dim → hidden… → task.out_dim()`.
    pub fn init<R: Rng>(
        arch: Architecture,
        task: Task,
        in_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(task.out_dim());
        let layers = dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Self { arch, task, layers }
    }

    pub fn from_layers(arch: Architecture, task: Task, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("network needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].weight.cols() != w[1].weight.rows() {
                return Err(Error::Argument(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].weight.cols(),
                    i + 1,
                    w[1].weight.rows()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.cols() {
                return Err(Error::Argument(format!("layer {i} bias length mismatch")));
            }
        }
        if layers.last().unwrap().weight.cols() != task.out_dim() {
            return Err(Error::Argument(format!(
                "final layer must have {} outputs",
                task.out_dim()
            )));
        }
        Ok(Self { arch, task, layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.cols())
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_inputs(&self, adj: Option<&CsrMatrix>, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Argument(format!(
                "feature matrix has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        match (self.arch, adj) {
            (Architecture::Gcn, None) => Err(Error::Argument(
                "GCN forward needs an adjacency operator".into(),
            )),
            (Architecture::Gcn, Some(a)) if a.shape() != (x.rows(), x.rows()) => {
                Err(Error::Argument(format!(
                    "adjacency is {:?} but there are {} nodes",
                    a.shape(),
                    x.rows()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Forward pass. `dropout` is `(rate, rng)` during training and `None` otherwise.
    pub fn forward<R: Rng>(
        &self,
        adj: Option<&CsrMatrix>,
        x: &Matrix,
        mut dropout: Option<(f64, &mut R)>,
    ) -> Result<(Matrix, ForwardCache)> {
        self.check_inputs(adj, x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            dropout: Vec::with_capacity(n),
        };
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mask = match dropout.as_mut() {
                Some((rate, rng)) if *rate > 0.0 => {
                    let keep = 1.0 - *rate;
                    let m: Vec<f64> = (0..h.data().len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (v, s) in h.data_mut().iter_mut().zip(&m) {
                        *v *= s;
                    }
                    Some(m)
                }
                _ => None,
            };
            let mut z = h.matmul(&layer.weight)?;
            if self.arch == Architecture::Gcn {
                z = adj.expect("checked").matmul_dense(&z)?;
            }
            z.add_row_vector(&layer.bias);
            let next = if l + 1 < n { z.map(relu) } else { z.clone() };
            cache.inputs.push(h);
            cache.pre.push(z);
            cache.dropout.push(mask);
            h = next;
        }
        Ok((h, cache))
    }

    /// Inference forward pass without dropout.
    pub fn output(&self, adj: Option<&CsrMatrix>, x: &Matrix) -> Result<Matrix> {
        self.forward::<rand_chacha::ChaCha8Rng>(adj, x, None)
            .map(|(out, _)| out)
    }

    /// Reverse-mode gradients of a scalar loss given `d loss / d output`.
    pub fn backward(
        &self,
        adj: Option<&CsrMatrix>,
        cache: &ForwardCache,
        grad_out: &Matrix,
    ) -> Result<Gradients> {
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let bias = g.column_sums();
            // Z = Â M + b with M = H W; Âᵀ = Â.
            let dm = match self.arch {
                Architecture::Gcn => adj.expect("forward checked adjacency").matmul_dense(&g)?,
                Architecture::Fcn => g,
            };
            let weight = cache.inputs[l].t_matmul(&dm)?;
            grads.push(LayerGrad { weight, bias });
            if l == 0 {
                break;
            }
            let mut dh = dm.matmul_t(&layer.weight)?;
            if let Some(mask) = &cache.dropout[l] {
                for (v, s) in dh.data_mut().iter_mut().zip(mask) {
                    *v *= s;
                }
            }
            for (v, z) in dh.data_mut().iter_mut().zip(cache.pre[l - 1].data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            g = dh;
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn predict(&self, adj: Option<&CsrMatrix>, x: &Matrix) -> Result<Prediction> {
        let out = self.output(adj, x)?;
        Ok(match self.task {
            Task::Regression => Prediction::Regression(out.data().to_vec()),
            Task::Classification => {
                let probabilities: Vec<[f64; N_CLASSES]> =
                    (0..out.rows()).map(|i| softmax(out.row(i))).collect();
                let classes = probabilities.iter().map(|p| argmax(p)).collect();
                Prediction::Classification {
                    classes,
                    probabilities,
                }
            }
        })
    }
}

/// Row softmax via the max-shift.
pub fn softmax(logits: &[f64]) -> [f64; N_CLASSES] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_CLASSES];
    let mut z = 0.0;
    for (pi, &l) in p.iter_mut().zip(logits) {
        *pi = (l - m).exp();
        z += *pi;
    }
    for pi in &mut p {
        *pi /= z;
    }
    p
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
