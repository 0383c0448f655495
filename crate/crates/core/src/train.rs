//! Minibatch Adam training with validation-based stopping.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, ModelDims, Task, Variant};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::example::{Example, Query};
use crate::model::SfModel;
use crate::nn::{adam_step, clip_grad_norm, AdamConfig, Mode};
use crate::rng::rng_for;
use crate::text::ImageFeatureStore;

const SHUFFLE_STREAM: u64 = 0x5a0f;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub variant: Variant,
    pub mlp_depth: usize,
    pub shared_embeddings: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation MRR improvement before stopping.
    pub patience: usize,
    /// Joint gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub dims: ModelDims,
}

impl TrainConfig {
    pub fn new(task: Task, variant: Variant) -> Self {
        Self {
            task,
            variant,
            mlp_depth: 2,
            shared_embeddings: true,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 5,
            patience: 1,
            clip_norm: None,
            max_steps: None,
            seed: 0,
            dims: ModelDims::for_task(task),
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            task: self.task,
            variant: self.variant,
            mlp_depth: self.mlp_depth,
            shared_embeddings: self.shared_embeddings,
            vocab_size,
            dims: self.dims,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Argument("batch size, epochs and patience must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Argument("clip norm must be positive".into()));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::Argument("max steps must be positive".into()));
        }
        Ok(())
    }
}

/// Checks that every example carries the query form of `task`.
pub fn check_task(task: Task, examples: &[Example]) -> Result<()> {
    for ex in examples {
        let ok = matches!(
            (task, &ex.query),
            (Task::VisDial, Query::Question(_)) | (Task::VisDialQ, Query::Pair(..))
        );
        if !ok {
            return Err(Error::Mismatch(format!(
                "image {} round {}: example does not belong to task {task}",
                ex.image_id, ex.round
            )));
        }
    }
    Ok(())
}

/// Owns a model and its optimizer settings; one call is one Adam step.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: SfModel,
    adam: AdamConfig,
    clip_norm: Option<f64>,
    steps: usize,
}

impl Trainer {
    pub fn new(model: SfModel, adam: AdamConfig, clip_norm: Option<f64>) -> Result<Self> {
        adam.validate()?;
        Ok(Self {
            model,
            adam,
            clip_norm,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Train-mode forward/backward on `batch`, then an Adam update.
    /// Returns the batch's mean loss before the update.
    pub fn step(&mut self, batch: &[&Example], features: Option<&ImageFeatureStore>) -> Result<f64> {
        self.model.set_mode(Mode::Train);
        self.model.zero_grad();
        let loss = self.model.loss_and_grad(batch, features)?;
        if !loss.is_finite() {
            return Err(Error::State(format!("non-finite loss at step {}", self.steps + 1)));
        }
        if let Some(c) = self.clip_norm {
            clip_grad_norm(self.model.params_mut(), c);
        }
        adam_step(self.model.params_mut(), &self.adam);
        self.steps += 1;
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub validation: Option<MetricsReport>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} steps={} train_loss={:.6}", self.epoch, self.steps, self.train_loss)?;
        if let Some(v) = &self.validation {
            write!(
                f,
                " val_mrr={:.4} val_r@1={:.2} val_r@5={:.2} val_r@10={:.2} val_mean_rank={:.2}",
                v.mrr, v.r_at_1, v.r_at_5, v.r_at_10, v.mean_rank
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Eval-mode model from the epoch with the best validation MRR, or the
    /// last epoch when no validation set was given.
    pub model: SfModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Splits a shuffled order into batches. A trailing single example is
/// folded into the previous batch, since batch norm needs two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains from a fresh He-initialised model. `on_epoch` sees each log line
/// as soon as the epoch ends.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    features: Option<&ImageFeatureStore>,
    vocab_size: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    check_task(cfg.task, train_set)?;
    check_task(cfg.task, val_set)?;
    let model = SfModel::new(cfg.model_config(vocab_size), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.adam(), cfg.clip_norm)?;

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, SfModel)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'epochs: for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut total = 0.0;
        let mut count = 0;
        let mut capped = false;
        for idx in batches(&order, cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| trainer.steps() >= m) {
                capped = true;
                break;
            }
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            total += trainer.step(&batch, features)? * batch.len() as f64;
            count += batch.len();
        }
        if count == 0 {
            break;
        }
        trainer.model.set_mode(Mode::Eval);
        let validation = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&trainer.model, val_set, features)?.report)
        };
        let entry = EpochLog {
            epoch,
            steps: trainer.steps(),
            train_loss: total / count as f64,
            validation,
        };
        on_epoch(&entry);
        log.push(entry);

        let score = validation.map_or(f64::NEG_INFINITY, |v| v.mrr);
        let improved = match &best {
            None => true,
            Some((s, ..)) => validation.is_none() || score > *s,
        };
        if improved {
            best = Some((score, epoch, trainer.model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break 'epochs;
            }
        }
        if capped {
            break;
        }
    }
    let (_, best_epoch, mut model) = best.ok_or_else(|| Error::State("no training step was taken".into()))?;
    model.set_mode(Mode::Eval);
    Ok(TrainOutcome { model, best_epoch, log })
}
