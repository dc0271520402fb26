use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    masked_cross_entropy, masked_mse, Adam, Architecture, LabelSet, Matrix, Network, Targets, Task,
};
use super::{FCN_HIDDEN, GCN_HIDDEN};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    /// Stop after this many epochs without improvement of the selection loss.
    pub patience: Option<usize>,
}

impl TrainConfig {
    pub fn for_arch(arch: Architecture) -> Self {
        let hidden_dims = match arch {
            Architecture::Gcn => GCN_HIDDEN.to_vec(),
            Architecture::Fcn => FCN_HIDDEN.to_vec(),
        };
        Self {
            learning_rate: 1e-2,
            epochs: 200,
            seed: 0,
            hidden_dims,
            dropout_rate: 0.0,
            weight_decay: 5e-4,
            patience: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Masked loss and its gradient with respect to the network output.
pub fn loss_and_grad(task: Task, out: &Matrix, labels: &LabelSet) -> Result<(f64, Matrix)> {
    match (task, &labels.targets) {
        (Task::Regression, Targets::Continuous(y)) => {
            masked_mse(out, y, &labels.mask).map(|(l, _, g)| (l, g))
        }
        (Task::Classification, Targets::Classes(y)) => masked_cross_entropy(out, y, &labels.mask),
        _ => Err(Error::Argument(format!(
            "{task:?} task given mismatched target kind"
        ))),
    }
}

/// Per-epoch node feature masking: each row of the input is swapped for
/// the same row of `hidden` with probability `rate`.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMasking<'a> {
    pub hidden: &'a Matrix,
    pub rate: f64,
}

impl FeatureMasking<'_> {
    fn apply<R: Rng>(&self, x: &Matrix, rng: &mut R) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows() {
            if rng.random::<f64>() < self.rate {
                out.row_mut(i).copy_from_slice(self.hidden.row(i));
            }
        }
        out
    }
}

/// Full-batch Adam over the masked loss.
///
/// Epoch `e` records the loss of the parameters before its update. The
/// returned network is the one with the lowest validation loss when a
/// validation mask is given, otherwise the lowest training loss.
pub fn train(
    arch: Architecture,
    task: Task,
    adj: Option<&CsrMatrix>,
    x: &Matrix,
    labels: &LabelSet,
    val_mask: Option<&[bool]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_masking(arch, task, adj, x, None, labels, val_mask, cfg)
}

/// [`train`] with optional per-epoch feature masking. Validation losses use
/// the unmasked input.
#[allow(clippy::too_many_arguments)]
pub fn train_with_masking(
    arch: Architecture,
    task: Task,
    adj: Option<&CsrMatrix>,
    x: &Matrix,
    masking: Option<FeatureMasking<'_>>,
    labels: &LabelSet,
    val_mask: Option<&[bool]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.mask.len() != x.rows() {
        return Err(Error::Argument(format!(
            "{} labels for {} nodes",
            labels.mask.len(),
            x.rows()
        )));
    }
    if let Some(m) = &masking {
        if m.hidden.rows() != x.rows() || m.hidden.cols() != x.cols() {
            return Err(Error::Argument(
                "masking matrix shape differs from the input".into(),
            ));
        }
        if !(0.0..=1.0).contains(&m.rate) {
            return Err(Error::Config(format!(
                "feature mask rate must be in [0, 1], got {}",
                m.rate
            )));
        }
    }
    let val_labels = val_mask.map(|m| labels.with_mask(m.to_vec())).transpose()?;
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mask_rng.set_stream(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init(arch, task, x.cols(), &cfg.hidden_dims, &mut rng);
    let mut opt = Adam::new(&net, cfg.learning_rate, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 0..cfg.epochs {
        let dropout = (cfg.dropout_rate > 0.0).then_some((cfg.dropout_rate, &mut rng));
        let masked = masking.map(|m| m.apply(x, &mut mask_rng));
        let (out, cache) = net.forward(adj, masked.as_ref().unwrap_or(x), dropout)?;
        let (train_loss, grad_out) = loss_and_grad(task, &out, labels)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                lr: cfg.learning_rate,
            });
        }
        let val_loss = match &val_labels {
            Some(v) => Some(loss_and_grad(task, &net.output(adj, x)?, v)?.0),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, net.clone()));
        } else if let (Some(p), Some((_, be, _))) = (cfg.patience, &best) {
            if epoch - be >= p {
                break;
            }
        }

        let grads = net.backward(adj, &cache, &grad_out)?;
        opt.step(&mut net, &grads);
        if !net.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                lr: cfg.learning_rate,
            });
        }
    }

    Ok(match best {
        Some((_, e, best_net)) => TrainOutcome {
            network: best_net,
            history,
            best_epoch: Some(e),
        },
        None => TrainOutcome {
            network: net,
            history,
            best_epoch: None,
        },
    })
}
