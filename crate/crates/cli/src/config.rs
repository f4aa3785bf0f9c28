use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfdm_core::model::{BranchMixing, ModelConfig};
use sfdm_core::training::{StepSampling, TrainConfig};
use sfdm_core::NoiseSchedule;

use crate::CliError;

/// Everything a run needs, read from one JSON file. Missing sections and
/// fields take their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub tokenizer: TokenizerSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub diffusion: DiffusionSection,
    pub train: TrainSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    /// `0` gives a character vocabulary.
    pub bpe_merges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Offset between consecutive training windows.
    pub stride: usize,
    /// Tail fraction of the corpus held out for evaluation.
    pub holdout_fraction: f64,
    /// Cap on held-out windows used by evaluation.
    pub eval_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub embed_dim: usize,
    pub unet_levels: usize,
    pub blocks_per_level: usize,
    pub ssm_state_dim: usize,
    pub ssm_kernel_len: usize,
    pub fourier_hidden: usize,
    pub mixing: BranchMixing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Explicit per-step betas; overrides the linear schedule when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub total_steps: u64,
    pub lr: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub checkpoint_interval: u64,
    pub eval_interval: u64,
    pub log_interval: u64,
    pub step_sampling: StepSampling,
    /// Record elapsed seconds in the metrics log. Off by default so that
    /// logs from identical runs compare equal byte for byte.
    pub log_wallclock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("data/alice.txt"),
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
            tokenizer: TokenizerSection::default(),
            data: DataSection::default(),
            model: ModelSection::default(),
            diffusion: DiffusionSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            stride: 8,
            holdout_fraction: 0.1,
            eval_windows: 64,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            seq_len: 128,
            embed_dim: 64,
            unet_levels: 2,
            blocks_per_level: 2,
            ssm_state_dim: 4,
            ssm_kernel_len: 16,
            fourier_hidden: 128,
            mixing: BranchMixing::Parallel,
        }
    }
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            steps: 8,
            beta_start: 0.1,
            beta_end: 0.3,
            betas: None,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            lr: t.lr,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            grad_clip: t.grad_clip,
            checkpoint_interval: t.checkpoint_interval,
            eval_interval: t.eval_interval,
            log_interval: t.log_interval,
            step_sampling: t.step_sampling,
            log_wallclock: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self, CliError> {
        serde_json::from_str(json).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let json = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&json).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the corpus.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.stride == 0 {
            return Err(CliError::Config("data.stride must be positive".into()));
        }
        if !(0.0 < self.data.holdout_fraction && self.data.holdout_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "data.holdout_fraction {} must lie strictly between 0 and 1",
                self.data.holdout_fraction
            )));
        }
        if self.data.eval_windows == 0 {
            return Err(CliError::Config("data.eval_windows must be positive".into()));
        }
        self.schedule()?;
        self.model_config(2)?;
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, CliError> {
        let d = &self.diffusion;
        let schedule = match &d.betas {
            Some(betas) => {
                if betas.len() != d.steps {
                    return Err(CliError::Config(format!(
                        "diffusion.betas has {} entries but diffusion.steps is {}",
                        betas.len(),
                        d.steps
                    )));
                }
                NoiseSchedule::from_betas(betas.clone())
            }
            None => NoiseSchedule::linear(d.steps, d.beta_start, d.beta_end),
        };
        schedule.map_err(|e| CliError::Config(format!("diffusion: {e}")))
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let cfg = ModelConfig {
            vocab_size,
            seq_len: m.seq_len,
            embed_dim: m.embed_dim,
            unet_levels: m.unet_levels,
            blocks_per_level: m.blocks_per_level,
            ssm_state_dim: m.ssm_state_dim,
            ssm_kernel_len: m.ssm_kernel_len,
            fourier_hidden: m.fourier_hidden,
            diffusion_steps: self.diffusion.steps,
            mixing: m.mixing,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            lr: t.lr,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            grad_clip: t.grad_clip,
            seed: self.seed,
            checkpoint_interval: t.checkpoint_interval,
            eval_interval: t.eval_interval,
            log_interval: t.log_interval,
            step_sampling: t.step_sampling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.diffusion.steps, 8);
        assert_eq!(c.model.seq_len, 128);
        assert_eq!(c.tokenizer.bpe_merges, 0);
    }

    #[test]
    fn json_roundtrip() {
        let mut c = RunConfig {
            seed: 17,
            ..Default::default()
        };
        c.diffusion.betas = Some(vec![0.5; 8]);
        c.model.mixing = BranchMixing::Sequential;
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_json(&back.to_json()).unwrap(), back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 3, "model": {"seq_len": 64}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.seq_len, 64);
        assert_eq!(c.model.embed_dim, 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"seeed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"seq_length": 64}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.model.seq_len = 100;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.diffusion.beta_end = 0.05;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.diffusion.betas = Some(vec![0.1]);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.train.warmup_steps = c.train.total_steps + 1;
        assert!(c.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn parse_serialize_parse_is_stable(
            seed in proptest::prelude::any::<u64>(),
            steps in 1usize..=10,
            beta in 0.01f64..0.5,
            lr in 1e-5f64..1e-1,
            sequential in proptest::prelude::any::<bool>(),
            explicit in proptest::prelude::any::<bool>(),
        ) {
            let mut c = RunConfig { seed, ..Default::default() };
            c.diffusion.steps = steps;
            c.diffusion.beta_start = beta;
            c.diffusion.betas = explicit.then(|| vec![beta; steps]);
            c.train.lr = lr;
            if sequential {
                c.model.mixing = BranchMixing::Sequential;
            }
            let once = RunConfig::from_json(&c.to_json()).unwrap();
            proptest::prop_assert_eq!(&once, &c);
            proptest::prop_assert_eq!(RunConfig::from_json(&once.to_json()).unwrap(), once);
        }
    }

    #[test]
    fn bundled_presets_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["default.json", "tiny.json"] {
            let c = RunConfig::load(&dir.join(name)).unwrap();
            c.validate().unwrap();
        }
    }
}
