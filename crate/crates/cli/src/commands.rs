use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sfdm_core::diffusion::{forward_step, match_probability};
use sfdm_core::grad_suite::{run_standard_suite, SuiteReport};
use sfdm_core::rng::{Purpose, RngStreams};
use sfdm_core::sampling::{self, SampleOutput, SampleRequest};
use sfdm_core::text::{bpe_train, read_corpus, split_holdout, windows};
use sfdm_core::training::{evaluate, Checkpoint, EvalReport, MetricsLog, Trainer};
use sfdm_core::{Model, TokenSequence, Vocab};

use rand::Rng;

use crate::{parse_mask, CliError, RunConfig};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Encoded corpus split into training and held-out windows.
pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<TokenSequence>,
    pub heldout: Vec<TokenSequence>,
    /// Entropy in nats of the token frequencies over the whole corpus.
    pub unigram_entropy: f64,
}

/// Reads the configured corpus. With `vocab = None` a vocabulary is built
/// from the corpus as the tokenizer section describes.
pub fn load_corpus(cfg: &RunConfig, vocab: Option<&Vocab>) -> Result<Corpus, CliError> {
    let text = read_corpus(&cfg.corpus)?;
    let vocab = match vocab {
        Some(v) => v.clone(),
        None if cfg.tokenizer.bpe_merges == 0 => Vocab::build_char(&text)?,
        None => bpe_train(&text, cfg.tokenizer.bpe_merges)?,
    };
    let ids = vocab.encode(&text)?;
    let (train_ids, held_ids) = split_holdout(ids.as_slice(), cfg.data.holdout_fraction);
    let n = cfg.model.seq_len;
    let train = windows(train_ids, n, cfg.data.stride)?;
    let heldout = windows(held_ids, n, n).map_err(|e| {
        CliError::Input(format!(
            "held-out split ({} tokens) is too short for one window of {n}: {e}",
            held_ids.len()
        ))
    })?;

    let mut counts = vec![0usize; vocab.len()];
    for &id in ids.as_slice() {
        counts[id as usize] += 1;
    }
    let total = ids.len() as f64;
    let unigram_entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(Corpus {
        vocab,
        train,
        heldout,
        unigram_entropy,
    })
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    /// Loss of every update run by this invocation, in order.
    pub losses: Vec<f64>,
    pub eval: EvalReport,
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub unigram_entropy: f64,
}

fn checkpoint_name(step: u64) -> String {
    format!("checkpoint-{step:06}.sfdm")
}

/// Trains from scratch, or continues from `resume`, writing into the output
/// directory: `config.json`, `vocab.json`, `metrics.csv`, `eval.csv`,
/// periodic checkpoints and `final.sfdm`.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, progress: &mut dyn Write) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mut trainer = Trainer::from_checkpoint(ck);
            trainer.config = cfg.train_config();
            trainer.config.validate()?;
            if trainer.step_count() > trainer.config.total_steps {
                return Err(CliError::Config(format!(
                    "checkpoint is at step {} beyond total_steps {}",
                    trainer.step_count(),
                    trainer.config.total_steps
                )));
            }
            trainer
        }
        None => {
            let corpus = load_corpus(cfg, None)?;
            let model = Model::new(cfg.model_config(corpus.vocab.len())?, cfg.seed)?;
            Trainer::new(model, corpus.vocab, cfg.schedule()?, cfg.train_config())?
        }
    };
    let corpus = load_corpus(cfg, Some(&trainer.vocab))?;
    if corpus.train.first().map(TokenSequence::len) != Some(trainer.model.config().seq_len) {
        return Err(CliError::Config("model.seq_len differs from the checkpoint".into()));
    }
    let heldout = &corpus.heldout[..corpus.heldout.len().min(cfg.data.eval_windows)];

    fs::write(out.join("config.json"), cfg.to_json()).map_err(|e| io_err(out, e))?;
    trainer.vocab.save(&out.join("vocab.json"))?;

    let metrics_path = out.join("metrics.csv");
    let eval_path = out.join("eval.csv");
    let (mut metrics, mut eval_log) = if resume.is_some() && metrics_path.exists() {
        let open = |p: &Path| OpenOptions::new().append(true).open(p).map_err(|e| io_err(p, e));
        let eval_log = if eval_path.exists() { open(&eval_path)? } else { new_eval_log(&eval_path)? };
        (MetricsLog::resume(BufWriter::new(open(&metrics_path)?)), eval_log)
    } else {
        let f = File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?;
        let log = MetricsLog::create(BufWriter::new(f)).map_err(|e| io_err(&metrics_path, e))?;
        (log, new_eval_log(&eval_path)?)
    };

    let _ = writeln!(
        progress,
        "vocab {} tokens, {} parameters, {} training windows, {} held-out windows",
        trainer.vocab.len(),
        trainer.model.num_params(),
        corpus.train.len(),
        heldout.len()
    );
    let start = Instant::now();
    let total = trainer.config.total_steps;
    let mut losses = Vec::new();
    while trainer.step_count() < total {
        let stats = trainer.step(&corpus.train)?;
        losses.push(stats.loss);
        let step = stats.step;
        if step == 1 || step % trainer.config.log_interval == 0 || step == total {
            let wall = if cfg.train.log_wallclock { start.elapsed().as_secs_f64() } else { 0.0 };
            metrics.append(&stats, wall).map_err(|e| io_err(&metrics_path, e))?;
            let _ = writeln!(progress, "step {step} loss {:.4} lr {:.2e}", stats.loss, stats.lr);
        }
        if step % trainer.config.eval_interval == 0 && step != total {
            let report = evaluate(&trainer.model, heldout, &trainer.schedule, cfg.seed)?;
            write_eval(&mut eval_log, step, &report).map_err(|e| io_err(&eval_path, e))?;
        }
        if step % trainer.config.checkpoint_interval == 0 {
            let path = out.join(checkpoint_name(step));
            trainer.checkpoint().save(&path)?;
        }
    }
    metrics.flush().map_err(|e| io_err(&metrics_path, e))?;

    let eval = evaluate(&trainer.model, heldout, &trainer.schedule, cfg.seed)?;
    write_eval(&mut eval_log, trainer.step_count(), &eval).map_err(|e| io_err(&eval_path, e))?;
    let final_checkpoint = out.join("final.sfdm");
    trainer.checkpoint().save(&final_checkpoint)?;
    Ok(TrainOutcome {
        trainer,
        losses,
        eval,
        final_checkpoint,
        metrics_path,
        unigram_entropy: corpus.unigram_entropy,
    })
}

fn new_eval_log(path: &Path) -> Result<File, CliError> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(f, "step,t,cross_entropy").map_err(|e| io_err(path, e))?;
    Ok(f)
}

fn write_eval(out: &mut impl Write, step: u64, report: &EvalReport) -> std::io::Result<()> {
    for (t, ce) in &report.per_step {
        writeln!(out, "{step},{t},{ce}")?;
    }
    Ok(())
}

/// Evaluates a checkpoint on the held-out split of the configured corpus.
pub fn eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = cfg.clone();
    cfg.model.seq_len = ck.model.config().seq_len;
    let corpus = load_corpus(&cfg, Some(&ck.vocab))?;
    let heldout = &corpus.heldout[..corpus.heldout.len().min(cfg.data.eval_windows)];
    Ok(evaluate(&ck.model, heldout, &ck.schedule, cfg.seed)?)
}

pub struct GenerateOptions {
    pub checkpoint: PathBuf,
    /// Defaults to the model's sequence length, the only length it accepts.
    pub length: Option<usize>,
    pub temperature: f64,
    pub seed: u64,
    pub trace: Option<PathBuf>,
}

pub struct InpaintOptions {
    pub checkpoint: PathBuf,
    pub prompt: PathBuf,
    pub mask: String,
    pub temperature: f64,
    pub seed: u64,
    pub trace: Option<PathBuf>,
}

fn write_trace(path: &Path, vocab: &Vocab, out: &SampleOutput, steps: usize) -> Result<(), CliError> {
    let mut text = String::new();
    let labels: Vec<usize> = if out.trace.len() == steps + 1 {
        (0..=steps).rev().collect()
    } else {
        vec![steps, 0]
    };
    for (t, x) in labels.iter().zip(&out.trace) {
        text.push_str(&format!("x^{t}\t{:?}\n", vocab.decode(x)?));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn generate(opts: &GenerateOptions) -> Result<String, CliError> {
    let ck = Checkpoint::load(&opts.checkpoint)?;
    let n = ck.model.config().seq_len;
    if let Some(len) = opts.length {
        if len != n {
            return Err(CliError::Input(format!("length {len} differs from the model's sequence length {n}")));
        }
    }
    let steps = ck.model.config().diffusion_steps;
    let mut req = SampleRequest::generate(n, steps, opts.temperature, opts.seed);
    req.keep_trace = opts.trace.is_some();
    let out = sampling::generate(&ck.model, &req)?;
    if let Some(path) = &opts.trace {
        write_trace(path, &ck.vocab, &out, steps)?;
    }
    Ok(ck.vocab.decode(&out.tokens)?)
}

/// Encodes the prompt file, keeps its first `N` tokens, and resamples the
/// positions outside the mask.
pub fn inpaint(opts: &InpaintOptions) -> Result<String, CliError> {
    let ck = Checkpoint::load(&opts.checkpoint)?;
    let n = ck.model.config().seq_len;
    let text = fs::read_to_string(&opts.prompt).map_err(|e| io_err(&opts.prompt, e))?;
    let ids = ck.vocab.encode(&text)?;
    if ids.len() < n {
        return Err(CliError::Input(format!(
            "prompt encodes to {} tokens; the model needs {n}",
            ids.len()
        )));
    }
    let prompt = TokenSequence::new(ids.as_slice()[..n].to_vec());
    let freeze = parse_mask(&opts.mask, n)?;
    let steps = ck.model.config().diffusion_steps;
    let mut req = SampleRequest::inpaint(prompt, freeze, steps, opts.temperature, opts.seed);
    req.keep_trace = opts.trace.is_some();
    let out = sampling::inpaint(&ck.model, &req)?;
    if let Some(path) = &opts.trace {
        write_trace(path, &ck.vocab, &out, steps)?;
    }
    Ok(ck.vocab.decode(&out.tokens)?)
}

/// Closed-form against simulated match rates `P(x^t = x^0)` for every `t`.
/// The simulation applies `t` single forward steps to `samples` uniform
/// random tokens.
pub fn noise_sim(cfg: &RunConfig, samples: usize, vocab_size: Option<usize>) -> Result<String, CliError> {
    cfg.validate()?;
    if samples == 0 {
        return Err(CliError::Config("samples must be positive".into()));
    }
    let v = match vocab_size {
        Some(v) => v,
        None => load_corpus(cfg, None)?.vocab.len(),
    };
    let schedule = cfg.schedule()?;
    let streams = RngStreams::new(cfg.seed);
    let mut csv = String::from("t,beta,survival,match_rate,empirical_match_rate,abs_deviation\n");
    for t in 1..=schedule.steps() {
        let mut rng = streams.stream(Purpose::NoiseSim, t as u64, 0);
        let x0: Vec<u32> = (0..samples).map(|_| rng.random_range(0..v as u32)).collect();
        let mut x = x0.clone();
        for u in 0..t {
            x = forward_step(&x, schedule.beta(u), &mut rng, v)?.0;
        }
        let hits = x.iter().zip(&x0).filter(|(a, b)| a == b).count();
        let empirical = hits as f64 / samples as f64;
        let exact = match_probability(&schedule, t, v)?;
        csv.push_str(&format!(
            "{t},{},{},{exact},{empirical},{}\n",
            schedule.beta(t - 1),
            schedule.survival(t)?,
            (exact - empirical).abs()
        ));
    }
    Ok(csv)
}

pub fn grad_check(seed: u64) -> Result<SuiteReport, CliError> {
    let report = run_standard_suite(seed);
    if report.passed() {
        Ok(report)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Numerical(format!(
            "gradient check failed for {}\n{}",
            names.join(", "),
            report.render()
        )))
    }
}
