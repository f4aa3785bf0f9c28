//! Discrete forward corruption process.
//!
//! One forward step keeps each token with probability `1 − β_t` and otherwise
//! replaces it with a uniform draw over the whole vocabulary (which may
//! return the same token). Kernels of the form `a·I + (1−a)·U` compose by
//! multiplying their `a`, so after `t` steps a token survives untouched with
//! probability `a_t = Π_{u<t} (1 − β_u)` and is otherwise uniform.

mod schedule;

use rand::Rng;
use thiserror::Error;

use crate::text::TokenSequence;

pub use schedule::{NoiseSchedule, MAX_STEPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("replacement probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("step {t} out of range {lo}..={hi}")]
    StepOutOfRange { t: usize, lo: usize, hi: usize },
    #[error("vocabulary size {0} is below 2")]
    VocabTooSmall(usize),
    #[error("token {token} is outside a vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
}

/// One supervised denoising example: the network sees `x_t` (corruption
/// level `t+1`) and is trained to predict `target` (level `t`).
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardSample {
    pub t: usize,
    pub x_t: TokenSequence,
    pub target: TokenSequence,
    /// Positions resampled by the last forward step.
    pub changed_mask: Vec<bool>,
}

fn check_tokens(x: &[u32], vocab_size: usize) -> Result<(), DiffusionError> {
    if vocab_size < 2 {
        return Err(DiffusionError::VocabTooSmall(vocab_size));
    }
    match x.iter().find(|&&tok| tok as usize >= vocab_size) {
        Some(&token) => Err(DiffusionError::TokenOutOfRange { token, vocab: vocab_size }),
        None => Ok(()),
    }
}

/// Applies `keep with prob keep_prob, else uniform resample` to every position.
fn resample<R: Rng + ?Sized>(x: &[u32], keep_prob: f64, rng: &mut R, vocab_size: usize) -> (Vec<u32>, Vec<bool>) {
    let replace_prob = 1.0 - keep_prob;
    let mut out = Vec::with_capacity(x.len());
    let mut mask = Vec::with_capacity(x.len());
    for &tok in x {
        if rng.random::<f64>() < replace_prob {
            out.push(rng.random_range(0..vocab_size as u32));
            mask.push(true);
        } else {
            out.push(tok);
            mask.push(false);
        }
    }
    (out, mask)
}

/// One application of the forward kernel with replacement probability `beta`.
pub fn forward_step<R: Rng + ?Sized>(
    x: &[u32],
    beta: f64,
    rng: &mut R,
    vocab_size: usize,
) -> Result<(Vec<u32>, Vec<bool>), DiffusionError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(DiffusionError::BadProbability(beta));
    }
    check_tokens(x, vocab_size)?;
    Ok(resample(x, 1.0 - beta, rng, vocab_size))
}

/// Survival probability `a_t` after `t` forward steps, `1 ≤ t ≤ T`.
pub fn marginal_survival(schedule: &NoiseSchedule, t: usize) -> Result<f64, DiffusionError> {
    schedule.survival(t)
}

/// Draws `x^t` directly from `x^0` using the closed-form `t`-step marginal.
pub fn forward_to_step<R: Rng + ?Sized>(
    x0: &[u32],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
    vocab_size: usize,
) -> Result<TokenSequence, DiffusionError> {
    let keep = schedule.survival(t)?;
    check_tokens(x0, vocab_size)?;
    Ok(TokenSequence::new(resample(x0, keep, rng, vocab_size).0))
}

/// Builds `(x^{t+1}, x^t)` for `t ∈ 0..T`; `t = 0` means the target is `x0`.
pub fn make_training_pair<R: Rng + ?Sized>(
    x0: &[u32],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
    vocab_size: usize,
) -> Result<ForwardSample, DiffusionError> {
    let steps = schedule.steps();
    if t >= steps {
        return Err(DiffusionError::StepOutOfRange { t, lo: 0, hi: steps - 1 });
    }
    check_tokens(x0, vocab_size)?;
    let target = if t == 0 {
        TokenSequence::new(x0.to_vec())
    } else {
        forward_to_step(x0, t, schedule, rng, vocab_size)?
    };
    let (x_t, changed_mask) = forward_step(&target.ids, schedule.beta(t), rng, vocab_size)?;
    Ok(ForwardSample {
        t,
        x_t: TokenSequence::new(x_t),
        target,
        changed_mask,
    })
}

/// Row-stochastic `V×V` matrix of one forward step, row = current token:
/// `β/V + (1−β)·[i = j]`.
pub fn transition_matrix(beta: f64, vocab_size: usize) -> Result<Vec<f64>, DiffusionError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(DiffusionError::BadProbability(beta));
    }
    if vocab_size < 2 {
        return Err(DiffusionError::VocabTooSmall(vocab_size));
    }
    let v = vocab_size;
    let uniform = beta / v as f64;
    Ok((0..v * v)
        .map(|idx| if idx / v == idx % v { uniform + (1.0 - beta) } else { uniform })
        .collect())
}

/// Probability that a token equals its original value after `t` steps.
pub fn match_probability(schedule: &NoiseSchedule, t: usize, vocab_size: usize) -> Result<f64, DiffusionError> {
    let a = schedule.survival(t)?;
    Ok(a + (1.0 - a) / vocab_size as f64)
}
