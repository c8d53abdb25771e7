//! End-to-end checks of the binary: artifact determinism, error exit codes
//! and the train -> eval -> matrix flow at a toy budget.

use std::path::{Path, PathBuf};
use std::process::Command;

fn dmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmap"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dmap-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const TINY_CFG: &str = "env = hopper2d\npolicy = simple\nsigma_train = 0.1\nseeds = [1]\n\n[train]\ntotal_steps = 400\nwarmup_steps = 150\nbuffer_capacity = 1024\n\n[eval]\ntest_sigmas = [0.1]\nepisodes = 3\n";

#[test]
fn testset_files_are_bit_identical_across_runs() {
    let dir = tmp_dir("testset");
    for name in ["a.json", "b.json"] {
        let status = dmap()
            .args(["testset", "--env", "hopper2d", "--sigma", "0.3", "--seed", "7", "--n", "20"])
            .arg("--out")
            .arg(dir.join(name))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("a.json")).unwrap();
    let b = std::fs::read(dir.join("b.json")).unwrap();
    assert_eq!(a, b, "same (env, sigma, seed, n) must produce identical bytes");
}

#[test]
fn schema_violations_exit_with_the_config_code() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    write(&cfg, "env = hopper2d\ntotal_stepz = 5\n");
    let out = dmap().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "unknown key should exit 3: {}", String::from_utf8_lossy(&out.stderr));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("total_stepz"), "error names the offending key: {msg}");
}

#[test]
fn missing_and_corrupt_inputs_have_distinct_exit_codes() {
    let dir = tmp_dir("badinputs");
    // missing checkpoint -> io error (4)
    let ts = dir.join("ts.json");
    let status = dmap()
        .args(["testset", "--env", "hopper2d", "--sigma", "0.1", "--seed", "1", "--n", "2"])
        .arg("--out")
        .arg(&ts)
        .status()
        .unwrap();
    assert!(status.success());
    let out = dmap()
        .args(["eval", "--ckpt"])
        .arg(dir.join("nope.bin"))
        .arg("--testset")
        .arg(&ts)
        .arg("--out")
        .arg(dir.join("eval"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // corrupted checkpoint -> format error (6)
    let bad = dir.join("bad.bin");
    write(&bad, "NOTMAGIC----");
    let out = dmap()
        .args(["eval", "--ckpt"])
        .arg(&bad)
        .arg("--testset")
        .arg(&ts)
        .arg("--out")
        .arg(dir.join("eval2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_matrix_roundtrip_and_cross_env_rejection() {
    let dir = tmp_dir("flow");
    let cfg = dir.join("exp.cfg");
    write(&cfg, TINY_CFG);
    let runs = dir.join("runs");
    let status = dmap()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .status()
        .unwrap();
    assert!(status.success());
    let ckpt = runs.join("sigma_0.1/seed_1/final.bin");
    assert!(ckpt.exists());
    assert!(runs.join("sigma_0.1/seed_1/metrics.csv").exists());
    assert!(runs.join("manifest.json").exists());

    // checkpoint bytes are untouched by evaluation
    let before = std::fs::read(&ckpt).unwrap();
    let ts = dir.join("ts.json");
    let status = dmap()
        .args(["testset", "--env", "hopper2d", "--sigma", "0.1", "--seed", "3", "--n", "4"])
        .arg("--out")
        .arg(&ts)
        .status()
        .unwrap();
    assert!(status.success());
    let status = dmap()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .arg("--testset")
        .arg(&ts)
        .args(["--train-sigma", "0.1"])
        .arg("--out")
        .arg(dir.join("eval"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(before, std::fs::read(&ckpt).unwrap(), "eval must not mutate its inputs");
    let report = std::fs::read_to_string(dir.join("eval/report.json")).unwrap();
    assert!(report.contains("\"rewards\""));
    assert!(report.contains("\"iid\""));

    // a walker test set must be rejected for a hopper checkpoint
    let wts = dir.join("wts.json");
    let status = dmap()
        .args(["testset", "--env", "walker2d", "--sigma", "0.1", "--seed", "3", "--n", "2"])
        .arg("--out")
        .arg(&wts)
        .status()
        .unwrap();
    assert!(status.success());
    let out = dmap()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .arg("--testset")
        .arg(&wts)
        .arg("--out")
        .arg(dir.join("eval3"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("walker2d"));

    // matrix over the single trained cell
    let status = dmap()
        .args(["matrix", "--config"])
        .arg(&cfg)
        .arg("--ckpt-dir")
        .arg(&runs)
        .arg("--out")
        .arg(dir.join("matrix"))
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(dir.join("matrix/matrix.csv")).unwrap();
    assert!(table.lines().count() >= 2);
    assert!(table.contains("iid"));
}

#[test]
fn metrics_streams_are_reproducible_for_a_fixed_master_seed() {
    let dir = tmp_dir("repro");
    let cfg = dir.join("exp.cfg");
    write(&cfg, TINY_CFG);
    let mut outputs = Vec::new();
    for run in ["r1", "r2"] {
        let status = dmap()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(run))
            .args(["--seed", "9"])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(dir.join(run).join("sigma_0.1/seed_1/metrics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    // checkpoints are bit-identical too
    let a = std::fs::read(dir.join("r1/sigma_0.1/seed_1/final.bin")).unwrap();
    let b = std::fs::read(dir.join("r2/sigma_0.1/seed_1/final.bin")).unwrap();
    assert_eq!(a, b);
}
