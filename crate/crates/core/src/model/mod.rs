//! The denoising network `p(x^t | x^{t+1}, t)`.

mod block;
mod config;
mod fourier;
mod params;
mod ssm;
mod unet;

use thiserror::Error;

use crate::numerics::{softmax_cross_entropy, NumericsError, Tape, Tensor, Var};
use crate::rng::{Purpose, RngStreams};

pub use block::{block, BlockVars, ProjVars};
pub use config::{BranchMixing, ModelConfig};
pub use fourier::{fourier_mix, fourier_mlp_layer, FourierMlpVars};
pub use params::{BoundParams, ParamStore};
pub use ssm::{raw_decay, ssm_kernel, ssm_layer, SsmVars, MAX_DECAY};
pub use unet::unet_forward;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("expected a multiple of {expected} tokens, got {got}")]
    Length { expected: usize, got: usize },
    #[error("diffusion step {t} outside 0..{steps}")]
    Step { t: usize, steps: usize },
    #[error("{0}")]
    Input(String),
    #[error("parameter table does not match the config: {0}")]
    Params(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Configuration plus the full parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

impl Model {
    /// Fresh model with parameters drawn from the `Init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = RngStreams::new(seed).stream(Purpose::Init, 0, 0);
        let params = unet::init_params(&config, &mut rng);
        Ok(Model { config, params })
    }

    /// Rebuilds a model from stored parameters, checking every name and shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = Self::shape_table(&config)?;
        let got = params.shape_table();
        if expected != got {
            let detail = expected
                .iter()
                .zip(&got)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected {} {:?}, found {} {:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_else(|| format!("expected {} tensors, found {}", expected.len(), got.len()));
            return Err(ModelError::Params(detail));
        }
        if let Some((name, _)) = params.iter().find(|(_, t)| !t.all_finite()) {
            return Err(ModelError::Params(format!("{name} holds non-finite values")));
        }
        Ok(Model { config, params })
    }

    /// `(name, shape)` of every parameter a model with `config` carries.
    pub fn shape_table(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        config.validate()?;
        let mut rng = RngStreams::new(0).stream(Purpose::Init, 0, 0);
        Ok(unet::init_params(config, &mut rng).shape_table())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// Records a forward pass on `tape` with parameters as trainable leaves.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        tokens: &[u32],
        steps: &[usize],
    ) -> Result<(Var<'t>, BoundParams<'t>), ModelError> {
        let bound = self.params.bind(tape, true);
        let logits = unet_forward(&self.config, &bound, tokens, steps)?;
        Ok((logits, bound))
    }

    /// Mean cross-entropy of predicting `targets` from `inputs` at `steps`.
    pub fn loss<'t>(
        &self,
        tape: &'t Tape,
        inputs: &[u32],
        targets: &[u32],
        steps: &[usize],
    ) -> Result<(Var<'t>, BoundParams<'t>), ModelError> {
        if inputs.len() != targets.len() {
            return Err(ModelError::Length {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let (logits, bound) = self.forward(tape, inputs, steps)?;
        let loss = softmax_cross_entropy(&logits, targets)?;
        Ok((loss, bound))
    }

    /// Inference-only logits `[B,N,V]`.
    pub fn logits(&self, tokens: &[u32], steps: &[usize]) -> Result<Tensor, ModelError> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let logits = unet_forward(&self.config, &bound, tokens, steps)?;
        let value = logits.value();
        Ok((*value).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{causal_depthwise_conv, grad_check_many};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(levels: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 5,
            seq_len: 8,
            embed_dim: 4,
            unet_levels: levels,
            blocks_per_level: 1,
            ssm_state_dim: 2,
            ssm_kernel_len: 4,
            fourier_hidden: 6,
            diffusion_steps: 3,
            mixing: BranchMixing::Parallel,
        }
    }

    fn randomise(model: &mut Model, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in model.params_mut().iter_mut() {
            if name.ends_with(".decay") {
                continue;
            }
            for v in t.data_mut() {
                *v += scale * rng.random_range(-1.0..1.0);
            }
        }
    }

    /// `z ← A z + B u(n)`, `y(n) = C·z + D u(n)` run literally.
    fn recurrence(a: &[f64], b: &[f64], c: &[f64], skip: f64, u: &[f64], window: usize) -> Vec<f64> {
        (0..u.len())
            .map(|n| {
                let start = (n + 1).saturating_sub(window);
                let mut z = vec![0.0; a.len()];
                for &un in &u[start..=n] {
                    for s in 0..a.len() {
                        z[s] = a[s] * z[s] + b[s] * un;
                    }
                }
                (0..a.len()).map(|s| c[s] * z[s]).sum::<f64>() + skip * u[n]
            })
            .collect()
    }

    #[test]
    fn kernel_convolution_matches_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for draw in 0..20 {
            let m = 1 + draw % 4;
            let n = [4, 8, 16, 32][draw % 4];
            let d = 2;
            let rnd = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let a: Vec<f64> = rnd(&mut rng, d * m).iter().map(|v| 0.95 * v).collect();
            let b = rnd(&mut rng, d * m);
            let c = rnd(&mut rng, d * m);
            let skip = rnd(&mut rng, d);
            let u = rnd(&mut rng, d * n);

            let tape = Tape::new();
            let var = |data: &[f64], shape: &[usize]| tape.constant(Tensor::new(shape, data.to_vec()).unwrap());
            let kernel = ssm_kernel(&var(&a, &[d, m]), &var(&b, &[d, m]), &var(&c, &[d, m]), &var(&skip, &[d]), n).unwrap();
            let y = causal_depthwise_conv(&var(&u, &[1, d, n]), &kernel).unwrap();
            for ch in 0..d {
                let r = ch * m..(ch + 1) * m;
                let oracle = recurrence(&a[r.clone()], &b[r.clone()], &c[r], skip[ch], &u[ch * n..(ch + 1) * n], n);
                for (i, want) in oracle.iter().enumerate() {
                    let got = y.value().data()[ch * n + i];
                    assert!((got - want).abs() < 1e-9, "draw {draw} ch {ch} n {i}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn truncated_kernel_matches_windowed_recurrence() {
        let (a, b, c) = ([0.9, -0.3], [1.0, 0.5], [0.7, -1.1]);
        let u: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 - 2.0) / 2.0).collect();
        let tape = Tape::new();
        let var = |data: &[f64], shape: &[usize]| tape.constant(Tensor::new(shape, data.to_vec()).unwrap());
        let kernel = ssm_kernel(&var(&a, &[1, 2]), &var(&b, &[1, 2]), &var(&c, &[1, 2]), &var(&[0.2], &[1]), 4).unwrap();
        let y = causal_depthwise_conv(&var(&u, &[1, 1, 16]), &kernel).unwrap();
        let oracle = recurrence(&a, &b, &c, 0.2, &u, 4);
        for (got, want) in y.value().data().iter().zip(oracle) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_model_gives_uniform_logits() {
        for levels in [0, 1] {
            let model = Model::new(tiny(levels), 11).unwrap();
            let tokens = [0, 1, 2, 3, 4, 0, 1, 2, 4, 4, 4, 4, 3, 3, 3, 3];
            let logits = model.logits(&tokens, &[0, 2]).unwrap();
            assert_eq!(logits.shape(), &[2, 8, 5]);
            assert!(logits.data().iter().all(|&v| v == 0.0));

            let tape = Tape::new();
            let (loss, _) = model.loss(&tape, &tokens, &tokens, &[1, 1]).unwrap();
            assert!((loss.item() - 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_block_is_identity() {
        let model = Model::new(tiny(1), 3).unwrap();
        let tape = Tape::new();
        let bound = model.params().bind(&tape, false);
        let x = tape.constant(Tensor::from_fn(&[2, 4, 8], |i| (i as f64 * 0.37).sin()));
        let p = BlockVars::bind(&bound, "down0.0", 8, 4, BranchMixing::Parallel);
        let y = block(&x, &[0, 2], &p).unwrap();
        assert_eq!(y.value().data(), x.value().data());
    }

    #[test]
    fn silent_fourier_branch_leaves_residual_ssm() {
        let mut model = Model::new(tiny(0), 3).unwrap();
        randomise(&mut model, 9, 0.5);
        for name in ["mid.0.fourier_out.w", "mid.0.fourier_out.b"] {
            model.params_mut().get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let tape = Tape::new();
        let bound = model.params().bind(&tape, false);
        let x = tape.constant(Tensor::from_fn(&[1, 4, 8], |i| (i as f64 * 0.61).cos()));
        let p = BlockVars::bind(&bound, "mid.0", 8, 4, BranchMixing::Parallel);
        let y = block(&x, &[1], &p).unwrap();

        let h = x.add_channel(&p.time.gather_rows(&[1]).unwrap()).unwrap();
        let s = p.ssm_proj.apply(&ssm_layer(&h, &p.ssm, 4).unwrap().gelu()).unwrap();
        let expect = x.add(&s).unwrap();
        assert!(y.value().max_abs_diff(&expect.value()) < 1e-15);
    }

    #[test]
    fn zero_levels_is_a_plain_stack() {
        let model = Model::new(tiny(0), 1).unwrap();
        assert!(model.params().names().all(|n| !n.contains("widen") && !n.contains("narrow")));
        assert!(model.params().names().any(|n| n.starts_with("mid.0.")));
    }

    #[test]
    fn later_tokens_influence_earlier_logits() {
        let mut model = Model::new(tiny(1), 5).unwrap();
        randomise(&mut model, 6, 0.3);
        let a = [0, 1, 2, 3, 4, 0, 1, 2];
        let mut b = a;
        b[6] = 4;
        let la = model.logits(&a, &[1]).unwrap();
        let lb = model.logits(&b, &[1]).unwrap();
        let v = 5;
        let early_change: f64 = (0..6 * v).map(|i| (la.data()[i] - lb.data()[i]).abs()).sum();
        assert!(early_change > 1e-6);
    }

    #[test]
    fn forward_is_pure() {
        let mut model = Model::new(tiny(1), 5).unwrap();
        randomise(&mut model, 7, 0.3);
        let tokens = [4, 3, 2, 1, 0, 1, 2, 3];
        let first = model.logits(&tokens, &[2]).unwrap();
        for _ in 0..3 {
            let again = model.logits(&tokens, &[2]).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&first), bits(&again));
        }
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(Model::new(tiny(1), 8).unwrap(), Model::new(tiny(1), 8).unwrap());
        assert_ne!(Model::new(tiny(1), 8).unwrap(), Model::new(tiny(1), 9).unwrap());
    }

    #[test]
    fn bad_inputs_rejected() {
        let model = Model::new(tiny(1), 1).unwrap();
        assert!(matches!(model.logits(&[0; 7], &[0]), Err(ModelError::Length { .. })));
        assert!(matches!(model.logits(&[0; 8], &[3]), Err(ModelError::Step { .. })));
        assert!(matches!(model.logits(&[5; 8], &[0]), Err(ModelError::Input(_))));
        assert!(matches!(model.logits(&[0; 16], &[0]), Err(ModelError::Input(_))));
        let mut cfg = tiny(1);
        cfg.ssm_kernel_len = 5;
        assert!(matches!(Model::new(cfg, 0), Err(ModelError::Config(_))));
    }

    #[test]
    fn from_params_checks_layout() {
        let model = Model::new(tiny(1), 1).unwrap();
        assert!(Model::from_params(tiny(1), model.params().clone()).is_ok());
        assert!(Model::from_params(tiny(0), model.params().clone()).is_err());
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for mixing in [BranchMixing::Parallel, BranchMixing::Sequential] {
            let mut cfg = tiny(1);
            cfg.mixing = mixing;
            let mut model = Model::new(cfg.clone(), 2).unwrap();
            randomise(&mut model, 3, 0.4);
            let names: Vec<String> = model.params().names().map(str::to_owned).collect();
            let values: Vec<Tensor> = names.iter().map(|n| model.params().get(n).unwrap().clone()).collect();
            let inputs = [0u32, 1, 2, 3, 4, 4, 2, 0, 1, 1, 3, 3, 0, 2, 4, 1];
            let targets = [1u32, 1, 2, 0, 4, 3, 2, 0, 1, 2, 3, 4, 0, 0, 4, 1];
            let report = grad_check_many(
                |tape, vars| {
                    let _ = tape;
                    let bound = BoundParams::from_vars(names.iter().cloned().zip(vars.iter().copied()));
                    let logits = unet_forward(&cfg, &bound, &inputs, &[0, 2]).map_err(|e| match e {
                        ModelError::Numerics(n) => n,
                        other => NumericsError::Domain(other.to_string()),
                    })?;
                    softmax_cross_entropy(&logits, &targets)
                },
                &values,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{mixing:?}: {report:?}");
        }
    }
}
