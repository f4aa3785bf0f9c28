use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sfdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfdm")).args(args).output().expect("binary runs")
}

fn corpus() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/alice.txt")
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, out: &Path) -> String {
    let json = format!(
        r#"{{
  "corpus": {corpus:?},
  "output_dir": {out:?},
  "seed": 3,
  "model": {{"seq_len": 16, "embed_dim": 8, "unet_levels": 1, "blocks_per_level": 1,
             "ssm_state_dim": 2, "ssm_kernel_len": 4, "fourier_hidden": 16}},
  "diffusion": {{"steps": 4, "beta_start": 0.1, "beta_end": 0.3}},
  "train": {{"batch_size": 4, "total_steps": 6, "warmup_steps": 2, "lr": 0.001,
             "checkpoint_interval": 3, "eval_interval": 3, "log_interval": 2}}
}}"#,
        corpus = corpus(),
        out = out.to_string_lossy(),
    );
    let path = dir.join("run.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sfdm(&["train", "--corpus", "/no/such/file.txt", "--output-dir", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"model": {"seq_length": 64}}"#).unwrap();
    let out = sfdm(&["--config", &path.to_string_lossy(), "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seq_length"));
}

#[test]
fn noise_sim_two_half_steps() {
    let out = sfdm(&["noise-sim", "--vocab-size", "4", "--betas", "0.5,0.5", "--samples", "50000"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,beta,survival,match_rate,empirical_match_rate,abs_deviation")
    );
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    assert!((last[2] - 0.25).abs() < 1e-12);
    assert!((last[3] - 0.4375).abs() < 1e-12);
    assert!(last[5] < 0.01);
}

#[test]
fn grad_check_passes() {
    let out = sfdm(&["grad-check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}

#[test]
fn train_generate_inpaint_eval() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = write_config(dir.path(), &run);

    let out = sfdm(&["--config", &cfg, "train"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["metrics.csv", "eval.csv", "vocab.json", "config.json", "checkpoint-000003.sfdm", "final.sfdm"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let steps: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["1", "2", "4", "6"]);

    let ck = run.join("final.sfdm").to_string_lossy().into_owned();
    let trace = dir.path().join("trace.txt");
    let out = sfdm(&["--seed", "1", "generate", "--checkpoint", &ck, "--trace", &trace.to_string_lossy()]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 5);
    let again = sfdm(&["--seed", "1", "generate", "--checkpoint", &ck]);
    assert_eq!(out.stdout, again.stdout);

    let prompt = dir.path().join("prompt.txt");
    fs::write(&prompt, "Alice was beginning to get very tired").unwrap();
    let out = sfdm(&[
        "inpaint",
        "--checkpoint",
        &ck,
        "--prompt",
        &prompt.to_string_lossy(),
        "--mask",
        "0-7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Alice wa"));

    let out = sfdm(&["--config", &cfg, "eval", "--checkpoint", &ck]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("denoising perplexity"));

    let out = sfdm(&["inpaint", "--checkpoint", &ck, "--prompt", &prompt.to_string_lossy(), "--mask", "0-16"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_2() {
    let out = sfdm(&["generate", "--checkpoint", "/no/such.sfdm"]);
    assert_eq!(out.status.code(), Some(2));
}
