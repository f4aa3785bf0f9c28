use serde::{Deserialize, Serialize};

use super::ModelError;

/// How the two branches of a block see their input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMixing {
    /// `x + ssm(h) + fourier(h)`
    #[default]
    Parallel,
    /// `x + s + fourier(h + s)` with `s = ssm(h)`
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Sequence length; a power of two.
    pub seq_len: usize,
    pub embed_dim: usize,
    /// Number of halvings of the sequence length.
    pub unet_levels: usize,
    pub blocks_per_level: usize,
    pub ssm_state_dim: usize,
    pub ssm_kernel_len: usize,
    pub fourier_hidden: usize,
    pub diffusion_steps: usize,
    #[serde(default)]
    pub mixing: BranchMixing,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} must be at least 2", self.vocab_size));
        }
        if self.seq_len < 2 || !self.seq_len.is_power_of_two() {
            return bad(format!("seq_len {} must be a power of two ≥ 2", self.seq_len));
        }
        if self.unet_levels >= usize::BITS as usize || self.seq_len >> self.unet_levels < 2 {
            return bad(format!(
                "seq_len {} cannot be halved {} times and keep at least 2 positions",
                self.seq_len, self.unet_levels
            ));
        }
        if self.ssm_kernel_len == 0 || self.ssm_kernel_len > self.deepest_len() {
            return bad(format!(
                "ssm_kernel_len {} must lie in 1..={} (sequence length at the deepest level)",
                self.ssm_kernel_len,
                self.deepest_len()
            ));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("blocks_per_level", self.blocks_per_level),
            ("ssm_state_dim", self.ssm_state_dim),
            ("fourier_hidden", self.fourier_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.diffusion_steps == 0 || self.diffusion_steps > crate::diffusion::MAX_STEPS {
            return bad(format!(
                "diffusion_steps {} outside 1..={}",
                self.diffusion_steps,
                crate::diffusion::MAX_STEPS
            ));
        }
        Ok(())
    }

    /// Sequence length at U-Net level `l` (0 = input resolution).
    pub fn level_len(&self, level: usize) -> usize {
        self.seq_len >> level
    }

    /// Channel width at U-Net level `l`.
    pub fn level_width(&self, level: usize) -> usize {
        self.embed_dim << level
    }

    pub fn deepest_len(&self) -> usize {
        self.level_len(self.unet_levels)
    }
}
