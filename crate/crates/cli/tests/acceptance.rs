//! CLI-level acceptance: deterministic training artifacts (criterion 11)
//! plus the documented exit-code and file contracts of every subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mortsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mortsim"))
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        r#"
master_seed = 42
population = 6
episode_months = 10

[train]
iterations = 2
rollouts = 2
minibatch = 256
epochs = 1
hidden = [8]

[outer]
mode = "adaptive"
loss = "social_index"
iterations = 3

[evaluation]
seeds = 1
episodes_per_shock = 1
"#,
    )
    .unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("command runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn train_into(config: &Path, out: &Path, seed: Option<u64>) -> Output {
    let mut cmd = mortsim();
    cmd.arg("train").arg("--config").arg(config).arg("--out").arg(out);
    if let Some(seed) = seed {
        cmd.arg("--seed").arg(seed.to_string());
    }
    run(&mut cmd)
}

#[test]
fn acceptance_11_train_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_exit(&train_into(&config, &out_a, None), 0);
    assert_exit(&train_into(&config, &out_b, None), 0);

    let log_a = fs::read(out_a.join("training_log.csv")).unwrap();
    let log_b = fs::read(out_b.join("training_log.csv")).unwrap();
    assert_eq!(log_a, log_b, "training logs differ between identical runs");

    let ckpt_a = fs::read(out_a.join("checkpoint.json")).unwrap();
    let ckpt_b = fs::read(out_b.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ between identical runs");
    println!("[PASS] criterion 11: identical seeds give byte-identical logs and checkpoints");
}

#[test]
fn train_smoke_writes_checkpoint_and_log() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("smoke");
    assert_exit(&train_into(&config, &out, None), 0);
    let log = fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert!(log.starts_with("# fingerprint="));
    // comment, header, two iteration rows
    assert_eq!(log.lines().count(), 4, "log:\n{log}");
    assert!(out.join("checkpoint.json").exists());
}

#[test]
fn train_missing_calibration_exits_2_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.toml");
    fs::write(&config, "calibration = \"/no/such/calibration.toml\"\n").unwrap();
    let output = train_into(&config, &dir.path().join("out"), None);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/no/such/calibration.toml"), "stderr: {stderr}");
}

#[test]
fn different_seeds_change_the_log() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_exit(&train_into(&config, &out_a, Some(1)), 0);
    assert_exit(&train_into(&config, &out_b, Some(2)), 0);
    let log_a = fs::read_to_string(out_a.join("training_log.csv")).unwrap();
    let log_b = fs::read_to_string(out_b.join("training_log.csv")).unwrap();
    assert_ne!(log_a, log_b);
}

fn trained_checkpoint(dir: &Path) -> PathBuf {
    let config = write_tiny_config(dir);
    let out = dir.join("trained");
    assert_exit(&train_into(&config, &out, None), 0);
    out.join("checkpoint.json")
}

#[test]
fn evaluate_full_grid_and_partial_grid_contracts() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let out = dir.path().join("eval");

    // full-grid evaluation of the null product writes both artifacts
    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--tag")
        .arg("baseline"));
    assert_exit(&output, 0);
    let per_shock = fs::read_to_string(out.join("eval_baseline_per_shock.csv")).unwrap();
    assert_eq!(per_shock.lines().count(), 2 + 11, "one row per grid point:\n{per_shock}");
    let summary = fs::read_to_string(out.join("eval_baseline_summary.json")).unwrap();
    assert!(summary.contains("integrated_social_index"));
    assert!(summary.contains("fingerprint"));

    // a grid missing -0.3 refuses integrated metrics with exit code 2
    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--shocks")
        .arg("-1.0,-0.9,-0.8,-0.7,-0.6,-0.5,-0.4,-0.2,-0.1,0.0"));
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("-0.3"), "stderr should name the missing shock: {stderr}");

    // the same partial grid works with --no-integrate
    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--tag")
        .arg("partial")
        .arg("--no-integrate")
        .arg("--shocks")
        .arg("-0.5,0.0"));
    assert_exit(&output, 0);
    let summary = fs::read_to_string(out.join("eval_partial_summary.json")).unwrap();
    assert!(summary.contains("\"integrated_social_index\": null"));
}

#[test]
fn evaluate_special_products_and_bad_params() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let out = dir.path().join("eval");

    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--special")
        .arg("matched-mra")
        .arg("--amount")
        .arg("1000")
        .arg("--tag")
        .arg("mra")
        .arg("--no-integrate")
        .arg("--dump-traces")
        .arg("--shocks")
        .arg("-0.5"));
    assert_exit(&output, 0);
    // one trace file per (seed, episode) at the single shock point
    let traces: Vec<_> = fs::read_dir(out.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 1);

    // out-of-bounds scaled parameter is a config error
    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--p0")
        .arg("1.2"));
    assert_exit(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("p0"));
}

#[test]
fn evaluate_refuses_mismatched_config() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_checkpoint(dir.path());

    // a config differing from the one in the checkpoint
    let other = dir.path().join("other.toml");
    fs::write(&other, "master_seed = 999\npopulation = 6\nepisode_months = 10\n").unwrap();
    let output = run(mortsim()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--config")
        .arg(&other)
        .arg("--out")
        .arg(dir.path().join("eval")));
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("fingerprint"), "stderr: {stderr}");
}

#[test]
fn sweep_and_frontier_idempotence() {
    let dir = TempDir::new().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let out = dir.path().join("sweep");
    let output = run(mortsim()
        .arg("sweep")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out)
        .arg("--products")
        .arg("4"));
    assert_exit(&output, 0);

    let results = fs::read_to_string(out.join("sweep_results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2 + 4);
    let frontier = fs::read_to_string(out.join("sweep_frontier.csv")).unwrap();
    assert!(frontier.lines().count() >= 3); // comment + header + at least one row

    // re-running the frontier op on the frontier file leaves the set
    // unchanged
    let recomputed = out.join("frontier_again.csv");
    let output = run(mortsim()
        .arg("frontier")
        .arg("--input")
        .arg(out.join("sweep_frontier.csv"))
        .arg("--out")
        .arg(&recomputed));
    assert_exit(&output, 0);
    let before: Vec<&str> = frontier.lines().skip(2).collect();
    let after_text = fs::read_to_string(&recomputed).unwrap();
    let after: Vec<&str> = after_text.lines().skip(2).collect();
    assert_eq!(before, after, "frontier is not idempotent");

    // a single product is its own frontier
    let out_single = dir.path().join("sweep1");
    let output = run(mortsim()
        .arg("sweep")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out_single)
        .arg("--products")
        .arg("1"));
    assert_exit(&output, 0);
    let single = fs::read_to_string(out_single.join("sweep_frontier.csv")).unwrap();
    assert_eq!(single.lines().count(), 2 + 1);
}

#[test]
fn two_layer_fixed_mode_and_resume() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());

    // fixed mode: theta constant across rows
    let out_fixed = dir.path().join("fixed");
    let output = run(mortsim()
        .arg("two-layer")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_fixed)
        .arg("--mode")
        .arg("fixed"));
    assert_exit(&output, 0);
    let log = fs::read_to_string(out_fixed.join("two_layer_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    let first_theta: Vec<&str> = rows[0].split(',').skip(1).take(6).collect();
    for row in &rows {
        let theta: Vec<&str> = row.split(',').skip(1).take(6).collect();
        assert_eq!(theta, first_theta, "theta changed in fixed mode");
    }

    // adaptive full run vs interrupted + resumed run: identical logs
    let out_full = dir.path().join("full");
    let output = run(mortsim()
        .arg("two-layer")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_full));
    assert_exit(&output, 0);

    // interrupted run: stop after 2 of 3 iterations, then resume
    let out_resumed = dir.path().join("resumed");
    let output = run(mortsim()
        .arg("two-layer")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_resumed)
        .arg("--max-iterations")
        .arg("2"));
    assert_exit(&output, 0);
    let log_partial = fs::read_to_string(out_resumed.join("two_layer_log.csv")).unwrap();
    assert_eq!(log_partial.lines().count(), 2 + 2, "partial run should have 2 rows");
    let output = run(mortsim()
        .arg("two-layer")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_resumed)
        .arg("--resume"));
    assert_exit(&output, 0);

    let log_full = fs::read_to_string(out_full.join("two_layer_log.csv")).unwrap();
    let log_resumed = fs::read_to_string(out_resumed.join("two_layer_log.csv")).unwrap();
    assert_eq!(log_full, log_resumed, "resumed log differs");
}
