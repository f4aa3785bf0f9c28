use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sfdm_cli::{CliError, GenerateOptions, InpaintOptions, RunConfig};

#[derive(Parser)]
#[command(name = "sfdm", version, about = "Discrete diffusion language model with a state-space + Fourier U-Net denoiser")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Record elapsed seconds in the metrics log.
    #[arg(long)]
    log_wallclock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the configured corpus.
    Train(TrainFlags),
    /// Sample text from full noise.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Write every intermediate state, one per line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Resample the positions of a prompt outside the frozen mask.
    Inpaint {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prompt: PathBuf,
        /// Frozen positions as inclusive ranges, e.g. "0-63,100-110".
        #[arg(long)]
        mask: String,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Per-step denoising cross-entropy on held-out text.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Closed-form versus simulated forward-process match rates, as CSV.
    NoiseSim {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Vocabulary size; defaults to the corpus character vocabulary.
        #[arg(long)]
        vocab_size: Option<usize>,
        /// Comma-separated explicit betas, overriding the config schedule.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Finite-difference check of every differentiable operation.
    GradCheck,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    let seed = cfg.seed;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(flags) => {
            if let Some(c) = flags.corpus {
                cfg.corpus = c;
            }
            if let Some(d) = flags.output_dir {
                cfg.output_dir = d;
            }
            if let Some(s) = flags.steps {
                cfg.train.total_steps = s;
            }
            if let Some(lr) = flags.lr {
                cfg.train.lr = lr;
            }
            if let Some(b) = flags.batch_size {
                cfg.train.batch_size = b;
            }
            if let Some(w) = flags.warmup_steps {
                cfg.train.warmup_steps = w;
            }
            cfg.train.log_wallclock |= flags.log_wallclock;
            let outcome = sfdm_cli::train(&cfg, flags.resume.as_deref(), &mut io::stderr())?;
            let _ = writeln!(out, "final checkpoint: {}", outcome.final_checkpoint.display());
            print_eval(&mut out, &outcome.eval);
        }
        Command::Generate {
            checkpoint,
            length,
            temperature,
            trace,
        } => {
            let text = sfdm_cli::generate(&GenerateOptions {
                checkpoint,
                length,
                temperature,
                seed,
                trace,
            })?;
            let _ = writeln!(out, "{text}");
        }
        Command::Inpaint {
            checkpoint,
            prompt,
            mask,
            temperature,
            trace,
        } => {
            let text = sfdm_cli::inpaint(&InpaintOptions {
                checkpoint,
                prompt,
                mask,
                temperature,
                seed,
                trace,
            })?;
            let _ = writeln!(out, "{text}");
        }
        Command::Eval { checkpoint, corpus } => {
            if let Some(c) = corpus {
                cfg.corpus = c;
            }
            let report = sfdm_cli::eval(&cfg, &checkpoint)?;
            print_eval(&mut out, &report);
        }
        Command::NoiseSim {
            samples,
            vocab_size,
            betas,
        } => {
            if let Some(b) = betas {
                cfg.diffusion.steps = b.len();
                cfg.diffusion.betas = Some(b);
            }
            let csv = sfdm_cli::noise_sim(&cfg, samples, vocab_size)?;
            let _ = write!(out, "{csv}");
        }
        Command::GradCheck => {
            let report = sfdm_cli::grad_check(seed)?;
            let _ = write!(out, "{}", report.render());
        }
    }
    Ok(())
}

fn print_eval(out: &mut impl Write, report: &sfdm_core::training::EvalReport) {
    let _ = writeln!(out, "t,cross_entropy");
    for (t, ce) in &report.per_step {
        let _ = writeln!(out, "{t},{ce:.6}");
    }
    let _ = writeln!(out, "mean cross-entropy {:.6}", report.mean_ce);
    let _ = writeln!(
        out,
        "denoising perplexity {:.4} (exp of mean denoising cross-entropy; not an autoregressive perplexity)",
        report.denoising_perplexity
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).context("sfdm") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            eprintln!("{e:#}");
            ExitCode::from(code as u8)
        }
    }
}
