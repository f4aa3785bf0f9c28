//! Finite-difference checks over every differentiable operation and a tiny
//! end-to-end model.
//!
//! Each case reduces the operation's output to a scalar through a fixed
//! random weighting, so every output coordinate contributes to the gradient.

use std::time::Instant;

use rand::Rng;

use crate::model::{
    block, fourier_mlp_layer, ssm_kernel, ssm_layer, unet_forward, BlockVars, BoundParams, BranchMixing, FourierMlpVars,
    Model, ModelConfig, ModelError, SsmVars,
};
use crate::numerics::{
    causal_depthwise_conv, grad_check_many, irfft, rfft, softmax_cross_entropy, NumericsError, Tape, Tensor, Var,
    DEFAULT_EPS,
};
use crate::rng::{Purpose, RngStreams, StreamRng};

/// Pass threshold on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

type CaseFn = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError>>;

/// One scalar function of some inputs.
pub struct GradCase {
    pub name: String,
    pub inputs: Vec<Tensor>,
    pub f: CaseFn,
}

impl GradCase {
    pub fn new<F>(name: impl Into<String>, inputs: Vec<Tensor>, f: F) -> Self
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError> + 'static,
    {
        GradCase {
            name: name.into(),
            inputs,
            f: Box::new(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: String,
    /// `None` when the case errored before a comparison could be made.
    pub max_rel_error: Option<f64>,
    pub coordinates: usize,
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    pub tolerance: f64,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| !c.passed)
    }

    /// One line per case: name, max relative error, verdict.
    pub fn render(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.cases {
            let err = match (&c.max_rel_error, &c.error) {
                (Some(e), _) => format!("{e:.3e}"),
                (None, Some(msg)) => format!("error: {msg}"),
                (None, None) => "-".into(),
            };
            let verdict = if c.passed { "ok" } else { "FAIL" };
            out.push_str(&format!("{:<width$}  {err:>10}  {verdict}\n", c.name));
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "{} cases, {failed} failed, tolerance {:.0e}, {:.1}s\n",
            self.cases.len(),
            self.tolerance,
            self.seconds
        ));
        out
    }
}

pub fn run_cases(cases: &[GradCase], tolerance: f64) -> SuiteReport {
    let start = Instant::now();
    let results = cases
        .iter()
        .map(|case| match grad_check_many(&*case.f, &case.inputs, DEFAULT_EPS) {
            Ok(r) => CaseResult {
                name: case.name.clone(),
                max_rel_error: Some(r.max_rel_error),
                coordinates: r.coordinates,
                error: None,
                passed: r.max_rel_error < tolerance,
            },
            Err(e) => CaseResult {
                name: case.name.clone(),
                max_rel_error: None,
                coordinates: 0,
                error: Some(e.to_string()),
                passed: false,
            },
        })
        .collect();
    SuiteReport {
        cases: results,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn uniform(rng: &mut StreamRng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// `Σ y ⊙ w` for a fixed pseudo-random `w` keyed by `key`.
fn project<'t>(y: Var<'t>, key: u64) -> Result<Var<'t>, NumericsError> {
    let mut rng = RngStreams::new(0x5eed).stream(Purpose::Test, key, 1);
    let w = y.tape().constant(uniform(&mut rng, &y.shape()));
    Ok(y.mul(&w)?.sum())
}

fn model_err(e: ModelError) -> NumericsError {
    match e {
        ModelError::Numerics(n) => n,
        other => NumericsError::Domain(other.to_string()),
    }
}

/// Configuration of the end-to-end case.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 5,
        seq_len: 8,
        embed_dim: 4,
        unet_levels: 1,
        blocks_per_level: 1,
        ssm_state_dim: 2,
        ssm_kernel_len: 4,
        fourier_hidden: 6,
        diffusion_steps: 3,
        mixing: BranchMixing::Parallel,
    }
}

/// The full suite: every differentiable operation and the tiny model.
pub fn standard_cases(seed: u64) -> Vec<GradCase> {
    let streams = RngStreams::new(seed);
    let mut k = 0u64;
    let mut next = |shape: &[usize]| {
        k += 1;
        uniform(&mut streams.stream(Purpose::Test, k, 0), shape)
    };

    let mut cases = vec![
        GradCase::new("add", vec![next(&[2, 3]), next(&[2, 3])], |_, v| project(v[0].add(&v[1])?, 1)),
        GradCase::new("sub", vec![next(&[2, 3]), next(&[2, 3])], |_, v| project(v[0].sub(&v[1])?, 2)),
        GradCase::new("mul", vec![next(&[2, 3]), next(&[2, 3])], |_, v| project(v[0].mul(&v[1])?, 3)),
        GradCase::new("mul_shared_input", vec![next(&[4])], |_, v| project(v[0].mul(&v[0])?, 4)),
        GradCase::new("scale", vec![next(&[5])], |_, v| project(v[0].scale(-1.7), 5)),
        GradCase::new("tanh", vec![next(&[6])], |_, v| project(v[0].tanh(), 6)),
        GradCase::new("gelu", vec![next(&[6])], |_, v| project(v[0].gelu(), 7)),
        GradCase::new("sum", vec![next(&[2, 2])], |_, v| Ok(v[0].tanh().sum())),
        GradCase::new("mean", vec![next(&[2, 2])], |_, v| Ok(v[0].tanh().mean())),
        GradCase::new("matmul", vec![next(&[3, 4]), next(&[4, 2])], |_, v| project(v[0].matmul(&v[1])?, 8)),
        GradCase::new("channel_mix", vec![next(&[2, 3, 4]), next(&[5, 3])], |_, v| {
            project(v[0].channel_mix(&v[1])?, 9)
        }),
        GradCase::new("add_bias_last", vec![next(&[3, 4]), next(&[4])], |_, v| {
            project(v[0].add_bias_last(&v[1])?, 10)
        }),
        GradCase::new("add_channel", vec![next(&[2, 3, 4]), next(&[3])], |_, v| {
            project(v[0].add_channel(&v[1])?, 11)
        }),
        GradCase::new("add_channel_per_batch", vec![next(&[2, 3, 4]), next(&[2, 3])], |_, v| {
            project(v[0].add_channel(&v[1])?, 12)
        }),
        GradCase::new("gather_rows", vec![next(&[4, 3])], |_, v| {
            project(v[0].gather_rows(&[2, 0, 2, 3, 1])?, 13)
        }),
        GradCase::new("reshape", vec![next(&[2, 6])], |_, v| project(v[0].reshape(&[3, 4])?.tanh(), 14)),
        GradCase::new("transpose_last2", vec![next(&[2, 3, 4])], |_, v| project(v[0].transpose_last2()?, 15)),
        GradCase::new("concat_last", vec![next(&[2, 3]), next(&[2, 2])], |_, v| {
            project(v[0].concat_last(&v[1])?, 16)
        }),
        GradCase::new("slice_last", vec![next(&[2, 6])], |_, v| project(v[0].slice_last(1, 3)?, 17)),
        GradCase::new("avg_pool2", vec![next(&[2, 3, 8])], |_, v| project(v[0].avg_pool2()?, 18)),
        GradCase::new("upsample2", vec![next(&[2, 3, 4])], |_, v| project(v[0].upsample2()?, 19)),
        GradCase::new("causal_depthwise_conv", vec![next(&[2, 3, 8]), next(&[3, 4])], |_, v| {
            project(causal_depthwise_conv(&v[0], &v[1])?, 20)
        }),
        GradCase::new("softmax_cross_entropy", vec![next(&[2, 3, 5])], |_, v| {
            softmax_cross_entropy(&v[0], &[0, 4, 2, 2, 1, 3])
        }),
    ];

    for n in [7usize, 8] {
        cases.push(GradCase::new(format!("rfft_n{n}"), vec![next(&[2, 2, n])], move |_, v| {
            let s = rfft(&v[0])?;
            project(s.real, 21)?.add(&project(s.imag, 22)?)
        }));
        let bins = n / 2 + 1;
        cases.push(GradCase::new(
            format!("irfft_n{n}"),
            vec![next(&[2, 2, bins]), next(&[2, 2, bins])],
            move |_, v| project(irfft(&v[0], &v[1], n)?, 23),
        ));
    }
    cases.push(GradCase::new("rfft_irfft_roundtrip", vec![next(&[1, 3, 16])], |_, v| {
        project(rfft(&v[0])?.inverse()?, 24)
    }));

    let mut decay = next(&[3, 2]);
    decay.data_mut().iter_mut().for_each(|a| *a *= 0.9);
    cases.push(GradCase::new(
        "ssm_kernel",
        vec![decay, next(&[3, 2]), next(&[3, 2]), next(&[3])],
        |_, v| project(ssm_kernel(&v[0], &v[1], &v[2], &v[3], 6)?, 25),
    ));
    cases.push(GradCase::new(
        "ssm_layer",
        vec![next(&[2, 3, 8]), next(&[3, 2]), next(&[3, 2]), next(&[3, 2]), next(&[3])],
        |_, v| {
            let p = SsmVars {
                decay_raw: v[1],
                input: v[2],
                output: v[3],
                skip: v[4],
            };
            project(ssm_layer(&v[0], &p, 4)?, 26)
        },
    ));
    cases.push(GradCase::new(
        "fourier_mlp_layer",
        vec![next(&[2, 3, 8]), next(&[10, 6]), next(&[6]), next(&[6, 10]), next(&[10])],
        |_, v| {
            let p = FourierMlpVars {
                w1: v[1],
                b1: v[2],
                w2: v[3],
                b2: v[4],
                seq_len: 8,
            };
            project(fourier_mlp_layer(&v[0], &p)?, 27)
        },
    ));

    // Block and model cases run on randomised parameters of the tiny model.
    let cfg = tiny_model_config();
    let mut model = Model::new(cfg.clone(), seed).expect("tiny config is valid");
    let mut rng = streams.stream(Purpose::Test, 1000, 0);
    for (name, t) in model.params_mut().iter_mut() {
        if !name.ends_with(".decay") {
            t.data_mut().iter_mut().for_each(|x| *x += 0.4 * rng.random_range(-1.0..1.0));
        }
    }
    let names: Vec<String> = model.params().names().map(str::to_owned).collect();
    let values: Vec<Tensor> = names.iter().map(|n| model.params().get(n).unwrap().clone()).collect();

    for mixing in [BranchMixing::Parallel, BranchMixing::Sequential] {
        let prefix = "down0.0";
        let sel: Vec<usize> = (0..names.len()).filter(|&i| names[i].starts_with(&format!("{prefix}."))).collect();
        let mut inputs = vec![next(&[2, cfg.embed_dim, cfg.seq_len])];
        inputs.extend(sel.iter().map(|&i| values[i].clone()));
        let block_names: Vec<String> = sel.iter().map(|&i| names[i].clone()).collect();
        let label = match mixing {
            BranchMixing::Parallel => "block",
            BranchMixing::Sequential => "block_sequential",
        };
        let (n, k) = (cfg.seq_len, cfg.ssm_kernel_len);
        cases.push(GradCase::new(label, inputs, move |_, v| {
            let bound = BoundParams::from_vars(block_names.iter().cloned().zip(v[1..].iter().copied()));
            let p = BlockVars::bind(&bound, prefix, n, k, mixing);
            project(block(&v[0], &[0, 2], &p)?, 28)
        }));
    }

    for mixing in [BranchMixing::Parallel, BranchMixing::Sequential] {
        let cfg = ModelConfig { mixing, ..cfg.clone() };
        let names = names.clone();
        let label = match mixing {
            BranchMixing::Parallel => "tiny_model_end_to_end",
            BranchMixing::Sequential => "tiny_model_end_to_end_sequential",
        };
        cases.push(GradCase::new(label, values.clone(), move |_, v| {
            let bound = BoundParams::from_vars(names.iter().cloned().zip(v.iter().copied()));
            let inputs = [0u32, 1, 2, 3, 4, 4, 2, 0, 1, 1, 3, 3, 0, 2, 4, 1];
            let targets = [1u32, 1, 2, 0, 4, 3, 2, 0, 1, 2, 3, 4, 0, 0, 4, 1];
            let logits = unet_forward(&cfg, &bound, &inputs, &[0, 2]).map_err(model_err)?;
            softmax_cross_entropy(&logits, &targets)
        }));
    }
    cases
}

/// Runs [`standard_cases`] at [`GRAD_TOLERANCE`].
pub fn run_standard_suite(seed: u64) -> SuiteReport {
    run_cases(&standard_cases(seed), GRAD_TOLERANCE)
}
