//! Reverse process: iterative denoising from uniform noise, with optional
//! frozen positions for inpainting.

use rand::Rng;
use thiserror::Error;

use crate::model::{Model, ModelError};
use crate::numerics::Tensor;
use crate::rng::{Purpose, RngStreams, StreamRng};
use crate::text::TokenSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("temperature {0} must be finite and non-negative")]
    BadTemperature(f64),
    #[error("length {got} does not match the model's sequence length {expected}")]
    Length { expected: usize, got: usize },
    #[error("step count {got} does not match the model's {expected}")]
    Steps { expected: usize, got: usize },
    #[error("diffusion step {t} outside 0..{steps}")]
    Step { t: usize, steps: usize },
    #[error("inpainting needs a prompt and a freeze mask of length {expected}, got {prompt} and {mask}")]
    Mask { expected: usize, prompt: usize, mask: usize },
    #[error("prompt token {0} is outside the vocabulary")]
    Token(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that maps `(tokens [B·N], steps [B])` to logits `[B,N,V]`.
pub trait Denoiser {
    fn vocab_size(&self) -> usize;
    fn seq_len(&self) -> usize;
    fn steps(&self) -> usize;
    fn logits(&self, tokens: &[u32], steps: &[usize]) -> Result<Tensor, SamplingError>;
}

impl Denoiser for Model {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn seq_len(&self) -> usize {
        self.config().seq_len
    }

    fn steps(&self) -> usize {
        self.config().diffusion_steps
    }

    fn logits(&self, tokens: &[u32], steps: &[usize]) -> Result<Tensor, SamplingError> {
        Ok(Model::logits(self, tokens, steps)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleMode {
    Generate,
    /// Positions with `freeze[i]` keep `prompt[i]` throughout.
    Inpaint { prompt: TokenSequence, freeze: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub length: usize,
    pub steps: usize,
    /// `0` selects the most likely token, lowest id on ties.
    pub temperature: f64,
    pub seed: u64,
    pub mode: SampleMode,
    /// Keep every intermediate state; otherwise only `x^T` and `x^0`.
    pub keep_trace: bool,
}

impl SampleRequest {
    pub fn generate(length: usize, steps: usize, temperature: f64, seed: u64) -> Self {
        SampleRequest {
            length,
            steps,
            temperature,
            seed,
            mode: SampleMode::Generate,
            keep_trace: true,
        }
    }

    pub fn inpaint(prompt: TokenSequence, freeze: Vec<bool>, steps: usize, temperature: f64, seed: u64) -> Self {
        SampleRequest {
            length: prompt.len(),
            steps,
            temperature,
            seed,
            mode: SampleMode::Inpaint { prompt, freeze },
            keep_trace: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub tokens: TokenSequence,
    /// `[x^T, x^{T−1}, …, x^0]` when the trace is kept, else `[x^T, x^0]`.
    pub trace: Vec<TokenSequence>,
}

fn check_temperature(tau: f64) -> Result<(), SamplingError> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(SamplingError::BadTemperature(tau))
    }
}

/// Draws one token from `softmax(logits / tau)`, or the argmax at `tau = 0`.
pub fn sample_token<R: Rng + ?Sized>(logits: &[f64], tau: f64, rng: &mut R) -> u32 {
    let (best, max) = logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if tau == 0.0 {
        return best as u32;
    }
    let weights: Vec<f64> = logits.iter().map(|&l| ((l - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    // Rounding left `u` just above the last cumulative bound.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(best) as u32
}

/// One reverse step `x^{t+1} → x^t`.
pub fn denoise_once<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    model: &D,
    x: &TokenSequence,
    t: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<TokenSequence, SamplingError> {
    check_temperature(temperature)?;
    if t >= model.steps() {
        return Err(SamplingError::Step { t, steps: model.steps() });
    }
    if x.len() != model.seq_len() {
        return Err(SamplingError::Length {
            expected: model.seq_len(),
            got: x.len(),
        });
    }
    let logits = model.logits(x.as_slice(), &[t])?;
    let v = model.vocab_size();
    let ids = logits
        .data()
        .chunks(v)
        .map(|row| sample_token(row, temperature, rng))
        .collect();
    Ok(TokenSequence::new(ids))
}

fn step_rng(seed: u64, t: usize) -> StreamRng {
    RngStreams::new(seed).stream(Purpose::Sample, t as u64, 0)
}

/// Stream used to draw the initial noise `x^T`.
pub fn initial_noise_rng(req: &SampleRequest) -> StreamRng {
    step_rng(req.seed, req.steps)
}

/// Stream used by reverse step `t`.
pub fn reverse_step_rng(req: &SampleRequest, t: usize) -> StreamRng {
    step_rng(req.seed, t)
}

fn run<D: Denoiser + ?Sized>(
    model: &D,
    req: &SampleRequest,
    frozen: Option<(&[u32], &[bool])>,
) -> Result<SampleOutput, SamplingError> {
    check_temperature(req.temperature)?;
    if req.length != model.seq_len() {
        return Err(SamplingError::Length {
            expected: model.seq_len(),
            got: req.length,
        });
    }
    if req.steps != model.steps() {
        return Err(SamplingError::Steps {
            expected: model.steps(),
            got: req.steps,
        });
    }
    let v = model.vocab_size() as u32;
    let pin = |x: &mut TokenSequence| {
        if let Some((prompt, freeze)) = frozen {
            for (i, tok) in x.ids.iter_mut().enumerate() {
                if freeze[i] {
                    *tok = prompt[i];
                }
            }
        }
    };

    let mut rng = initial_noise_rng(req);
    let mut x = TokenSequence::new((0..req.length).map(|_| rng.random_range(0..v)).collect());
    pin(&mut x);
    let mut trace = vec![x.clone()];
    for t in (0..req.steps).rev() {
        let mut rng = reverse_step_rng(req, t);
        x = denoise_once(model, &x, t, req.temperature, &mut rng)?;
        pin(&mut x);
        if req.keep_trace {
            trace.push(x.clone());
        }
    }
    if !req.keep_trace {
        trace.push(x.clone());
    }
    Ok(SampleOutput { tokens: x, trace })
}

/// Ancestral sampling from uniform noise `x^T` down to `x^0`.
pub fn generate<D: Denoiser + ?Sized>(model: &D, req: &SampleRequest) -> Result<SampleOutput, SamplingError> {
    run(model, req, None)
}

/// Like [`generate`], but frozen positions are set to the prompt before the
/// first step and after every step.
pub fn inpaint<D: Denoiser + ?Sized>(model: &D, req: &SampleRequest) -> Result<SampleOutput, SamplingError> {
    let (prompt, freeze) = match &req.mode {
        SampleMode::Inpaint { prompt, freeze } => (prompt, freeze),
        SampleMode::Generate => return generate(model, req),
    };
    if prompt.len() != req.length || freeze.len() != req.length {
        return Err(SamplingError::Mask {
            expected: req.length,
            prompt: prompt.len(),
            mask: freeze.len(),
        });
    }
    if let Some(&tok) = prompt.as_slice().iter().find(|&&tok| tok as usize >= model.vocab_size()) {
        return Err(SamplingError::Token(tok));
    }
    run(model, req, Some((prompt.as_slice(), freeze)))
}

/// Dispatches on the request mode.
pub fn sample<D: Denoiser + ?Sized>(model: &D, req: &SampleRequest) -> Result<SampleOutput, SamplingError> {
    match req.mode {
        SampleMode::Generate => generate(model, req),
        SampleMode::Inpaint { .. } => inpaint(model, req),
    }
}
