use crate::numerics::{NumericsError, Var};

use super::config::BranchMixing;
use super::fourier::{fourier_mlp_layer, FourierMlpVars};
use super::params::BoundParams;
use super::ssm::{ssm_layer, SsmVars};

/// Linear channel projection `[B,D,N] → [B,E,N]` plus bias.
#[derive(Clone, Copy, Debug)]
pub struct ProjVars<'t> {
    /// `[E, D]`
    pub weight: Var<'t>,
    /// `[E]`
    pub bias: Var<'t>,
}

impl<'t> ProjVars<'t> {
    pub fn bind(params: &BoundParams<'t>, prefix: &str) -> Self {
        ProjVars {
            weight: params.get(&format!("{prefix}.w")),
            bias: params.get(&format!("{prefix}.b")),
        }
    }

    pub fn apply(&self, x: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        x.channel_mix(&self.weight)?.add_channel(&self.bias)
    }
}

/// One residual block: `x + ssm_branch(h) + fourier_branch(h)` with
/// `h = x + time_embedding[t]`. Each branch ends in a projection that starts
/// at zero, so a freshly initialised block is the identity.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars<'t> {
    /// `[T, D]` one learned row per diffusion step.
    pub time: Var<'t>,
    pub ssm: SsmVars<'t>,
    pub ssm_proj: ProjVars<'t>,
    pub fourier: FourierMlpVars<'t>,
    pub fourier_proj: ProjVars<'t>,
    pub kernel_len: usize,
    pub mixing: BranchMixing,
}

impl<'t> BlockVars<'t> {
    pub fn bind(
        params: &BoundParams<'t>,
        prefix: &str,
        seq_len: usize,
        kernel_len: usize,
        mixing: BranchMixing,
    ) -> Self {
        BlockVars {
            time: params.get(&format!("{prefix}.time")),
            ssm: SsmVars::bind(params, &format!("{prefix}.ssm")),
            ssm_proj: ProjVars::bind(params, &format!("{prefix}.ssm_out")),
            fourier: FourierMlpVars::bind(params, &format!("{prefix}.fourier"), seq_len),
            fourier_proj: ProjVars::bind(params, &format!("{prefix}.fourier_out")),
            kernel_len,
            mixing,
        }
    }
}

/// `x[B,D,N]`, `steps[b]` = diffusion step of sequence `b`.
pub fn block<'t>(x: &Var<'t>, steps: &[u32], p: &BlockVars<'t>) -> Result<Var<'t>, NumericsError> {
    let t_emb = p.time.gather_rows(steps)?;
    let h = x.add_channel(&t_emb)?;
    let s = p.ssm_proj.apply(&ssm_layer(&h, &p.ssm, p.kernel_len)?.gelu())?;
    let fourier_in = match p.mixing {
        BranchMixing::Parallel => h,
        BranchMixing::Sequential => h.add(&s)?,
    };
    let f = p.fourier_proj.apply(&fourier_mlp_layer(&fourier_in, &p.fourier)?)?;
    x.add(&s)?.add(&f)
}
