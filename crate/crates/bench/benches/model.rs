use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sfdm_core::numerics::Tape;
use sfdm_core::{Model, ModelConfig, NoiseSchedule, TokenSequence, TrainConfig, Trainer, Vocab};

fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: 70,
        seq_len: 64,
        embed_dim: 32,
        unet_levels: 1,
        blocks_per_level: 2,
        ssm_state_dim: 4,
        ssm_kernel_len: 16,
        fourier_hidden: 64,
        diffusion_steps: 8,
        mixing: Default::default(),
    }
}

fn tokens(n: usize, v: usize) -> Vec<u32> {
    (0..n).map(|i| ((i * 31 + 7) % v) as u32).collect()
}

fn forward(c: &mut Criterion) {
    let cfg = tiny();
    let model = Model::new(cfg.clone(), 0).unwrap();
    let x = tokens(16 * cfg.seq_len, cfg.vocab_size);
    let steps = vec![3; 16];
    c.bench_function("tiny_forward_b16", |b| b.iter(|| black_box(model.logits(&x, &steps).unwrap())));
    c.bench_function("tiny_forward_backward_b16", |b| {
        b.iter(|| {
            let tape = Tape::new();
            let (loss, _) = model.loss(&tape, &x, &x, &steps).unwrap();
            tape.backward(loss).unwrap();
            black_box(loss.item())
        })
    });
}

fn train_step(c: &mut Criterion) {
    let cfg = tiny();
    let v = cfg.vocab_size;
    let vocab = Vocab::from_parts((0..v).map(|k| format!("<{k}>")).collect(), vec![], None).unwrap();
    let windows: Vec<TokenSequence> = (0..32)
        .map(|w| TokenSequence::new(tokens(cfg.seq_len + w, v)[w..].to_vec()))
        .collect();
    let schedule = NoiseSchedule::linear(8, 0.1, 0.3).unwrap();
    let train = TrainConfig {
        total_steps: u64::MAX / 2,
        ..Default::default()
    };
    let mut trainer = Trainer::new(Model::new(cfg, 0).unwrap(), vocab, schedule, train).unwrap();
    c.bench_function("tiny_train_step_b16", |b| b.iter(|| black_box(trainer.step(&windows).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = forward, train_step
}
criterion_main!(benches);
