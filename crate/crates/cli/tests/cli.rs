use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circumnav::neural::{save_weights, LstmParams, Normalization};
use circumnav::LstmModel;

const BIN: &str = env!("CARGO_BIN_EXE_circumnav");

const TINY_TRAIN: &str = r#"
preset = "desk"

[controller]
window = 6

[model]
hidden = 4

[training]
iterations = 2
samples_per_iteration = 200
epochs = 2
batch_size = 16
episode_steps = 60
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CIRCUMNAV_OUT").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_training(root: &Path) -> PathBuf {
    let cfg = root.join("tiny.toml");
    fs::write(&cfg, TINY_TRAIN).unwrap();
    let out = root.join("train");
    let o = run(&["train", "--config", s(&cfg), "--out", s(&out), "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn help_succeeds_and_bad_arguments_fail_validation() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["simulate", "--frobnicate"])), 1);
    assert_eq!(code(&run(&["dance"])), 1);
    assert_eq!(code(&run(&["simulate", "--oracle", "--ablation", "--scenario", "constant:3"])), 1);
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["train", "--iterations", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = run(&["simulate", "--scenario", "constant:3", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--oracle"), "{}", stderr(&o));

    let o = run(&["simulate", "--oracle", "--scenario", "zigzag:3", "--out", s(&out)]);
    assert_eq!(code(&o), 1);

    let o = run(&["simulate", "--oracle", "--preset", "gigantic", "--scenario", "constant:3", "--out", s(&out)]);
    assert_eq!(code(&o), 1);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[controller]\nk_q = 3.0\n").unwrap();
    let o = run(&["simulate", "--oracle", "--config", s(&bad), "--scenario", "constant:3", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));

    let o = run(&["sweep", "wobble", "--oracle", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("nope.bin");
    let o = run(&["simulate", "--weights", s(&missing), "--scenario", "constant:3", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"definitely not weights").unwrap();
    assert_eq!(code(&run(&["inspect-weights", s(&junk)])), 2);
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // Constant output: v_hat = [500, 0] m/s whatever the input.
    let mut params = LstmParams::zeros(4, 4, 4);
    params.fc_b_mut().copy_from_slice(&[3.0, 3.0, 50.0, 0.0]);
    let model = LstmModel {
        params,
        window: 30,
        normalization: Normalization {
            velocity_scale: 60.0,
            position_scale: 10.0,
            target_velocity_scale: 10.0,
        },
        raw_bearing: false,
    };
    let w = dir.path().join("wild.bin");
    save_weights(&model, &w).unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--weights", s(&w), "--scenario", "constant:3", "--steps", "3000", "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}{}", stdout(&o), stderr(&o));
    assert!(out.join("trial.csv").exists());
}

#[test]
fn train_writes_its_artifacts_and_the_config_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_training(dir.path());
    for f in ["config.toml", "training.csv", "timing.csv", "weights.bin", "checkpoints/iteration-000.bin", "checkpoints/iteration-001.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = csv_rows(&out.join("training.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "1");
    assert_eq!(csv_rows(&out.join("timing.csv")).len(), 2);
    assert_eq!(
        fs::read(out.join("weights.bin")).unwrap(),
        fs::read(out.join("checkpoints/iteration-001.bin")).unwrap()
    );

    let again = dir.path().join("again");
    let o = run(&["train", "--config", s(&out.join("config.toml")), "--out", s(&again)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(out.join("weights.bin")).unwrap(), fs::read(again.join("weights.bin")).unwrap());
    assert_eq!(fs::read(out.join("training.csv")).unwrap(), fs::read(again.join("training.csv")).unwrap());
    assert_eq!(fs::read(out.join("config.toml")).unwrap(), fs::read(again.join("config.toml")).unwrap());

    let o = run(&["inspect-weights", s(&out.join("weights.bin"))]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("hidden size            4"), "{text}");
    assert!(text.contains("window                 6"), "{text}");
    assert!(text.contains("checksum               ok"), "{text}");

    let sim = dir.path().join("sim");
    let o = run(&["simulate", "--weights", s(&out.join("weights.bin")), "--scenario", "circle:0.2", "--steps", "120", "--out", s(&sim)]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    let cfg = fs::read_to_string(sim.join("config.toml")).unwrap();
    assert!(cfg.contains("window = 6") && cfg.contains("hidden = 4"), "{cfg}");
    let mut r = csv::Reader::from_path(sim.join("trial.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 19);
}

#[test]
fn noise_sweep_needs_a_model_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_training(dir.path());
    let w = out.join("weights.bin");
    let sweep = dir.path().join("sweep");
    let arg = format!("0={}", s(&w));
    let o = run(&["sweep", "noise", "--sigmas", "0,0.2", "--noise-weights", &arg, "--trials", "2", "--out", s(&sweep)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("0.2"), "{}", stderr(&o));

    let o = run(&["sweep", "noise", "--weights", s(&w), "--out", s(&sweep)]);
    assert_eq!(code(&o), 1);

    let both = format!("0.2={}", s(&w));
    let o = run(&[
        "sweep", "noise", "--sigmas", "0,0.2", "--noise-weights", &arg, "--noise-weights", &both, "--trials", "2", "--summary-only",
        "--out", s(&sweep),
    ]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    assert_eq!(csv_rows(&sweep.join("noise-0/summary.csv")).len(), 2);
    assert_eq!(csv_rows(&sweep.join("noise-0.2/summary.csv")).len(), 2);
}

#[test]
fn summary_only_skips_per_trial_files() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let o = run(&["sweep", "circle", "--oracle", "--out", s(&full)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(full.join("circle/trials")).unwrap().count(), 15);

    let slim = dir.path().join("slim");
    let o = run(&["sweep", "circle", "--oracle", "--summary-only", "--out", s(&slim)]);
    assert_eq!(code(&o), 0);
    assert!(!slim.join("circle/trials").exists());
    assert_eq!(
        fs::read(full.join("circle/summary.csv")).unwrap(),
        fs::read(slim.join("circle/summary.csv")).unwrap()
    );
    assert!(slim.join("long.csv").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["simulate", "--oracle", "--scenario", "constant:2", "--steps", "10"])
        .env("CIRCUMNAV_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let made: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(made.len(), 1);
    let name = made[0].file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.starts_with("simulate-"), "{name}");
    assert!(made[0].join("trial.csv").exists());
}
