//! U-Net denoiser over token sequences.
//!
//! ```text
//! tokens ─ embed ─┬─ blocks ─ pool ─ widen ─┬─ … ─ mid blocks ─ … ─┬─ up ─ narrow ─ (+skip) ─ blocks ─ head ─ logits
//!                 └──────── skip ───────────┼──────────────────────┘
//! ```
//!
//! Down level `l` runs its blocks at length `N/2^l` and width `D·2^l`, then
//! average-pools positions by two and doubles the channel width. The
//! bottleneck runs at level `L`. Each up level repeats positions, halves the
//! width, adds the skip saved on the way down and runs its blocks. A
//! per-position linear head maps width `D` to vocabulary logits.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::fft::rfft_bins as fft_bins;
use crate::numerics::{Tensor, Var};
use crate::rng::StreamRng;

use super::block::{block, BlockVars, ProjVars};
use super::config::ModelConfig;
use super::params::{BoundParams, ParamStore};
use super::ssm::raw_decay;
use super::ModelError;

pub(crate) fn block_prefixes(cfg: &ModelConfig) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for l in 0..cfg.unet_levels {
        for i in 0..cfg.blocks_per_level {
            out.push((format!("down{l}.{i}"), l));
        }
    }
    for i in 0..cfg.blocks_per_level {
        out.push((format!("mid.{i}"), cfg.unet_levels));
    }
    for l in 0..cfg.unet_levels {
        for i in 0..cfg.blocks_per_level {
            out.push((format!("up{l}.{i}"), l));
        }
    }
    out
}

fn normal(rng: &mut StreamRng, shape: &[usize], std: f64) -> Tensor {
    Tensor::from_fn(shape, |_| std * rng.sample::<f64, _>(StandardNormal))
}

/// Fresh parameters. Branch output projections and the vocabulary head start
/// at zero: every block is the identity and all logits are zero.
pub(crate) fn init_params(cfg: &ModelConfig, rng: &mut StreamRng) -> ParamStore {
    let mut p = ParamStore::new();
    let (v, d, t, m, h) = (
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.diffusion_steps,
        cfg.ssm_state_dim,
        cfg.fourier_hidden,
    );

    p.insert("embed", normal(rng, &[v, d], 1.0));

    for (prefix, level) in block_prefixes(cfg) {
        let w = cfg.level_width(level);
        let two_f = 2 * fft_bins(cfg.level_len(level));
        p.insert(format!("{prefix}.time"), normal(rng, &[t, w], 0.1));

        // Decays spread over [0.5, 0.95] so channels start with a mix of
        // short and long memories.
        let decay = Tensor::from_fn(&[w, m], |i| {
            let s = i % m;
            let frac = if m > 1 { s as f64 / (m - 1) as f64 } else { 0.5 };
            raw_decay(0.5 + 0.45 * frac)
        });
        p.insert(format!("{prefix}.ssm.decay"), decay);
        p.insert(format!("{prefix}.ssm.b"), normal(rng, &[w, m], 1.0 / (m as f64).sqrt()));
        p.insert(format!("{prefix}.ssm.c"), normal(rng, &[w, m], 1.0 / (m as f64).sqrt()));
        p.insert(format!("{prefix}.ssm.skip"), Tensor::filled(&[w], 1.0));
        p.insert(format!("{prefix}.ssm_out.w"), Tensor::zeros(&[w, w]));
        p.insert(format!("{prefix}.ssm_out.b"), Tensor::zeros(&[w]));

        p.insert(format!("{prefix}.fourier.w1"), normal(rng, &[two_f, h], 1.0 / (two_f as f64).sqrt()));
        p.insert(format!("{prefix}.fourier.b1"), Tensor::zeros(&[h]));
        p.insert(format!("{prefix}.fourier.w2"), normal(rng, &[h, two_f], 1.0 / (h as f64).sqrt()));
        p.insert(format!("{prefix}.fourier.b2"), Tensor::zeros(&[two_f]));
        p.insert(format!("{prefix}.fourier_out.w"), Tensor::zeros(&[w, w]));
        p.insert(format!("{prefix}.fourier_out.b"), Tensor::zeros(&[w]));
    }

    for l in 0..cfg.unet_levels {
        let w = cfg.level_width(l);
        p.insert(format!("down{l}.widen.w"), normal(rng, &[2 * w, w], 1.0 / (w as f64).sqrt()));
        p.insert(format!("down{l}.widen.b"), Tensor::zeros(&[2 * w]));
        p.insert(format!("up{l}.narrow.w"), normal(rng, &[w, 2 * w], 1.0 / (2.0 * w as f64).sqrt()));
        p.insert(format!("up{l}.narrow.b"), Tensor::zeros(&[w]));
    }

    p.insert("head.w", Tensor::zeros(&[d, v]));
    p.insert("head.b", Tensor::zeros(&[v]));
    p
}

/// Logits `[B,N,V]` for `tokens` (row-major `[B,N]`) at per-sequence steps.
pub fn unet_forward<'t>(
    cfg: &ModelConfig,
    params: &BoundParams<'t>,
    tokens: &[u32],
    steps: &[usize],
) -> Result<Var<'t>, ModelError> {
    let n = cfg.seq_len;
    if !tokens.len().is_multiple_of(n) || tokens.is_empty() {
        return Err(ModelError::Length {
            expected: n,
            got: tokens.len(),
        });
    }
    let batch = tokens.len() / n;
    if steps.len() != batch {
        return Err(ModelError::Input(format!(
            "{} step values for a batch of {batch}",
            steps.len()
        )));
    }
    if let Some(&t) = steps.iter().find(|&&t| t >= cfg.diffusion_steps) {
        return Err(ModelError::Step {
            t,
            steps: cfg.diffusion_steps,
        });
    }
    if let Some(&tok) = tokens.iter().find(|&&tok| tok as usize >= cfg.vocab_size) {
        return Err(ModelError::Input(format!(
            "token {tok} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let steps: Vec<u32> = steps.iter().map(|&t| t as u32).collect();
    let bind_block = |prefix: &str, level: usize| {
        BlockVars::bind(params, prefix, cfg.level_len(level), cfg.ssm_kernel_len, cfg.mixing)
    };

    let d = cfg.embed_dim;
    let mut x = params
        .get("embed")
        .gather_rows(tokens)?
        .reshape(&[batch, n, d])?
        .transpose_last2()?;

    let mut skips = Vec::with_capacity(cfg.unet_levels);
    for l in 0..cfg.unet_levels {
        for i in 0..cfg.blocks_per_level {
            x = block(&x, &steps, &bind_block(&format!("down{l}.{i}"), l))?;
        }
        skips.push(x);
        x = ProjVars::bind(params, &format!("down{l}.widen")).apply(&x.avg_pool2()?)?;
    }
    for i in 0..cfg.blocks_per_level {
        x = block(&x, &steps, &bind_block(&format!("mid.{i}"), cfg.unet_levels))?;
    }
    for l in (0..cfg.unet_levels).rev() {
        x = ProjVars::bind(params, &format!("up{l}.narrow")).apply(&x.upsample2()?)?;
        x = x.add(&skips[l])?;
        for i in 0..cfg.blocks_per_level {
            x = block(&x, &steps, &bind_block(&format!("up{l}.{i}"), l))?;
        }
    }

    let v = cfg.vocab_size;
    let logits = x
        .transpose_last2()?
        .reshape(&[batch * n, d])?
        .matmul(&params.get("head.w"))?
        .add_bias_last(&params.get("head.b"))?
        .reshape(&[batch, n, v])?;
    Ok(logits)
}
