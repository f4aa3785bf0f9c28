//! Denoising training: sample a step `t` per sequence, corrupt the clean
//! window to levels `t` and `t+1`, and fit `x^t` from `x^{t+1}` with
//! cross-entropy under AdamW.

mod checkpoint;
mod metrics;
mod optim;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{make_training_pair, DiffusionError, NoiseSchedule};
use crate::model::{Model, ModelError};
use crate::numerics::Tape;
use crate::rng::{Purpose, RngStreams, StreamRng};
use crate::text::{TextError, TokenSequence, Vocab};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{MetricsLog, METRICS_HEADER};
pub use optim::{adamw_update, clip_global_norm, global_norm, warmup_lr, AdamW, OptimizerState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: String },
    #[error("held-out set is empty")]
    EmptyHeldout,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// How diffusion steps are drawn for a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSampling {
    /// Independent uniform `t` for every sequence.
    #[default]
    PerSequence,
    /// One uniform `t` shared by the whole batch.
    PerBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub lr: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub eval_interval: u64,
    pub log_interval: u64,
    #[serde(default)]
    pub step_sampling: StepSampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            total_steps: 2000,
            lr: 3e-4,
            warmup_steps: 100,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            seed: 0,
            checkpoint_interval: 500,
            eval_interval: 500,
            log_interval: 10,
            step_sampling: StepSampling::PerSequence,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        for (name, v) in [
            ("batch_size", self.batch_size as u64),
            ("total_steps", self.total_steps),
            ("checkpoint_interval", self.checkpoint_interval),
            ("eval_interval", self.eval_interval),
            ("log_interval", self.log_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if self.warmup_steps > self.total_steps {
            return bad(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip {c} must be positive"));
            }
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamW {
        AdamW::new(self.lr, self.weight_decay)
    }
}

/// Summary of one optimizer update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Update number, from 1.
    pub step: u64,
    pub t_mean: f64,
    pub loss: f64,
    pub lr: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Samples steps for `batch_len` sequences.
pub fn sample_steps<R: Rng + ?Sized>(rng: &mut R, batch_len: usize, steps: usize, mode: StepSampling) -> Vec<usize> {
    match mode {
        StepSampling::PerSequence => (0..batch_len).map(|_| rng.random_range(0..steps)).collect(),
        StepSampling::PerBatch => vec![rng.random_range(0..steps); batch_len],
    }
}

/// Corrupts `batch`, computes the denoising loss, and applies one AdamW update.
pub fn train_step<R: Rng + ?Sized>(
    model: &mut Model,
    batch: &[TokenSequence],
    schedule: &NoiseSchedule,
    opt: &mut OptimizerState,
    rng: &mut R,
    config: &TrainConfig,
) -> Result<StepStats, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let cfg = model.config().clone();
    if schedule.steps() != cfg.diffusion_steps {
        return Err(TrainError::Config(format!(
            "schedule has {} steps, model expects {}",
            schedule.steps(),
            cfg.diffusion_steps
        )));
    }
    let steps = sample_steps(rng, batch.len(), schedule.steps(), config.step_sampling);
    let mut inputs = Vec::with_capacity(batch.len() * cfg.seq_len);
    let mut targets = Vec::with_capacity(batch.len() * cfg.seq_len);
    for (seq, &t) in batch.iter().zip(&steps) {
        let pair = make_training_pair(seq.as_slice(), t, schedule, rng, cfg.vocab_size)?;
        inputs.extend_from_slice(pair.x_t.as_slice());
        targets.extend_from_slice(pair.target.as_slice());
    }

    let next = opt.step + 1;
    let tape = Tape::new();
    let (loss, bound) = model.loss(&tape, &inputs, &targets, &steps)?;
    let loss_value = loss.item();
    if !loss_value.is_finite() {
        return Err(TrainError::NonFinite {
            step: next,
            what: format!("loss {loss_value}"),
        });
    }
    tape.backward(loss).map_err(ModelError::from)?;
    let mut grads = bound.grads(&tape);
    drop(bound);
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(TrainError::NonFinite {
            step: next,
            what: format!("gradient of {name}"),
        });
    }
    let grad_norm = match config.grad_clip {
        Some(c) => clip_global_norm(&mut grads, c),
        None => global_norm(&grads),
    };
    let lr = warmup_lr(opt.hyper.lr, next, config.warmup_steps);
    opt.update(model.params_mut(), &grads, lr);

    Ok(StepStats {
        step: next,
        t_mean: steps.iter().sum::<usize>() as f64 / steps.len() as f64,
        loss: loss_value,
        lr,
        grad_norm,
    })
}

/// Everything needed to continue a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub model: Model,
    pub vocab: Vocab,
    pub schedule: NoiseSchedule,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model, vocab: Vocab, schedule: NoiseSchedule, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if vocab.len() != model.config().vocab_size {
            return Err(TrainError::Config(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        let optimizer = OptimizerState::new(config.adamw(), model.params());
        Ok(Trainer {
            model,
            vocab,
            schedule,
            optimizer,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.optimizer.step
    }

    /// One update on a batch drawn from `windows`. Randomness is keyed by the
    /// update number, so a run resumed from a checkpoint continues exactly.
    pub fn step(&mut self, windows: &[TokenSequence]) -> Result<StepStats, TrainError> {
        if windows.is_empty() {
            return Err(TrainError::Config("no training windows".into()));
        }
        let streams = RngStreams::new(self.config.seed);
        let next = self.optimizer.step + 1;
        let mut pick = streams.stream(Purpose::Batch, next, 0);
        let batch: Vec<TokenSequence> = (0..self.config.batch_size)
            .map(|_| windows[pick.random_range(0..windows.len())].clone())
            .collect();
        let mut rng = streams.stream(Purpose::Corrupt, next, 0);
        train_step(
            &mut self.model,
            &batch,
            &self.schedule,
            &mut self.optimizer,
            &mut rng,
            &self.config,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            vocab: self.vocab.clone(),
            schedule: self.schedule.clone(),
            optimizer: self.optimizer.clone(),
            train: self.config.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        Trainer {
            model: ck.model,
            vocab: ck.vocab,
            schedule: ck.schedule,
            optimizer: ck.optimizer,
            config: ck.train,
        }
    }
}

/// Mean denoising cross-entropy per step on held-out windows.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_step: BTreeMap<usize, f64>,
    pub mean_ce: f64,
    /// `exp(mean_ce)`: a denoising perplexity, not an autoregressive one.
    pub denoising_perplexity: f64,
}

/// Number of windows evaluated per forward pass.
const EVAL_CHUNK: usize = 32;

/// Evaluates every step `t` on every held-out window. Corruption of window
/// `i` at step `t` uses its own stream of `seed`, so results do not depend
/// on chunking.
pub fn evaluate(model: &Model, heldout: &[TokenSequence], schedule: &NoiseSchedule, seed: u64) -> Result<EvalReport, TrainError> {
    if heldout.is_empty() {
        return Err(TrainError::EmptyHeldout);
    }
    let cfg = model.config();
    let streams = RngStreams::new(seed);
    let mut per_step = BTreeMap::new();
    for t in 0..schedule.steps() {
        let mut total = 0.0;
        for (c, chunk) in heldout.chunks(EVAL_CHUNK).enumerate() {
            let mut inputs = Vec::with_capacity(chunk.len() * cfg.seq_len);
            let mut targets = Vec::with_capacity(chunk.len() * cfg.seq_len);
            for (j, seq) in chunk.iter().enumerate() {
                let idx = (c * EVAL_CHUNK + j) as u64;
                let mut rng: StreamRng = streams.stream(Purpose::Eval, t as u64, idx);
                let pair = make_training_pair(seq.as_slice(), t, schedule, &mut rng, cfg.vocab_size)?;
                inputs.extend_from_slice(pair.x_t.as_slice());
                targets.extend_from_slice(pair.target.as_slice());
            }
            let tape = Tape::new();
            let bound = model.params().bind(&tape, false);
            let logits = crate::model::unet_forward(cfg, &bound, &inputs, &vec![t; chunk.len()])?;
            let loss = crate::numerics::softmax_cross_entropy(&logits, &targets).map_err(ModelError::from)?;
            total += loss.item() * chunk.len() as f64;
        }
        per_step.insert(t, total / heldout.len() as f64);
    }
    let mean_ce = per_step.values().sum::<f64>() / per_step.len() as f64;
    Ok(EvalReport {
        per_step,
        mean_ce,
        denoising_perplexity: mean_ce.exp(),
    })
}
