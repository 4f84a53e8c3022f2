//! Mini-batch Adam training with early stopping, and checkpoint files.

mod adam;
mod checkpoint;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, clip_global_norm, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use crate::corpus::{DatasetSplit, EncodedExample, SoftLabelSet};
use crate::distill::{hard_ce, KdObjective, LossBreakdown};
use crate::error::{DataError, TrainError};
use crate::eval::argmax_rows;
use crate::nn::{backward, forward, infer, init_params, Batch, Mode, ModelConfig, ParamSet};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum validation-loss decrease that resets the patience counter.
    pub min_delta: f64,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            lambda: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            min_delta: 1e-5,
            clip_norm: 5.0,
            seed: 0,
            model,
        }
    }

    pub fn student(num_classes: usize) -> Self {
        Self::new(ModelConfig::student(num_classes))
    }

    /// Teacher preset trained on hard labels only.
    pub fn teacher(num_classes: usize) -> Self {
        Self {
            lambda: 0.0,
            ..Self::new(ModelConfig::teacher(num_classes))
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("eps_adam", self.eps_adam), ("clip_norm", self.clip_norm)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return bad(format!("min_delta must be >= 0, got {}", self.min_delta));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        self.model.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

/// Metrics of one completed epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean over the epoch's training batches, dropout active.
    pub train: LossBreakdown,
    /// Hard cross entropy on the validation split, infer mode.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Training history and the early-stopping outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// λ actually used: 0 when no soft labels were supplied.
    pub lambda: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Hard cross entropy and accuracy of `examples` in infer mode.
pub fn hard_loss_and_accuracy(params: &ParamSet, examples: &[EncodedExample], batch_size: usize) -> Result<(f64, f64), TrainError> {
    let probs = infer(params, examples, batch_size)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let loss = hard_ce(&probs, &labels)?;
    let hits = argmax_rows(&probs).iter().zip(&labels).filter(|(p, t)| p == t).count();
    Ok((loss, hits as f64 / examples.len() as f64))
}

/// Trains a fresh model on `split.train`, early-stopping on the validation
/// hard cross entropy and returning the parameters of the best epoch.
///
/// Without `teacher_soft` the objective is hard cross entropy alone whatever
/// `cfg.lambda` says; with it, every training id must have a soft label.
pub fn train_model(cfg: &TrainConfig, split: &DatasetSplit, teacher_soft: Option<&SoftLabelSet>) -> Result<(ParamSet, TrainReport), TrainError> {
    cfg.validate()?;
    let train = &split.train;
    let val = &split.validation;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSplit);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidationSplit);
    }
    let k = cfg.model.num_classes;
    let targets: Option<Vec<&[f64]>> = match teacher_soft {
        Some(set) => {
            if set.classes() != k {
                return Err(DataError::Invalid(format!("soft labels have {} classes, model has {k}", set.classes())).into());
            }
            Some(train.iter().map(|e| set.require(&e.id)).collect::<Result<_, _>>()?)
        }
        None => None,
    };
    let lambda = if targets.is_some() { cfg.lambda } else { 0.0 };
    let objective = KdObjective::new(lambda)?;
    let hyper = cfg.adam();

    let mut params = init_params(&cfg.model, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut best_params = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::INFINITY;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut dropout = rng::stream(cfg.seed, Stream::Dropout, epoch as u64);

        let (mut hard_sum, mut soft_sum, mut combined_sum) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::new(chunk.iter().map(|&i| &train[i]));
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let p = targets
                .as_ref()
                .map(|t| Tensor::from_vec(&[chunk.len(), k], chunk.iter().flat_map(|&i| t[i].iter().copied()).collect()));

            let (q, cache) = forward(&params, &batch, Mode::Train(&mut dropout))?;
            let loss = objective.loss(&q, &labels, p.as_ref())?;
            let d_logits = objective.grad_logits(&q, &labels, p.as_ref())?;
            let mut grads = backward(&params, &cache, &d_logits)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam_step(&mut params, &grads, &mut state, &hyper)?;

            let w = chunk.len() as f64;
            hard_sum += w * loss.hard;
            soft_sum += w * loss.soft.unwrap_or(0.0);
            combined_sum += w * loss.combined;
        }
        let n = train.len() as f64;
        let train_loss = LossBreakdown {
            hard: hard_sum / n,
            soft: targets.as_ref().map(|_| soft_sum / n),
            combined: combined_sum / n,
            lambda,
        };

        let (val_loss, val_accuracy) = hard_loss_and_accuracy(&params, val, cfg.batch_size)?;
        debug!("epoch {epoch}: train {:.6} val {val_loss:.6} acc {val_accuracy:.4}", train_loss.combined);
        history.push(EpochRecord {
            epoch,
            train: train_loss,
            val_loss,
            val_accuracy,
        });

        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best_params.clone_from(&params);
        }
        if val_loss < reference - cfg.min_delta {
            reference = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }
    info!(
        "trained {} epochs ({:?}), best epoch {best_epoch} val loss {best_loss:.6}",
        history.len(),
        stop_reason
    );
    Ok((
        best_params,
        TrainReport {
            lambda,
            history,
            best_epoch,
            best_val_loss: best_loss,
            stop_reason,
        },
    ))
}

/// Hard-label training of the larger teacher configuration carried by `cfg`.
pub fn train_teacher(cfg: &TrainConfig, split: &DatasetSplit) -> Result<(ParamSet, TrainReport), TrainError> {
    train_model(&cfg.with_lambda(0.0), split, None)
}
