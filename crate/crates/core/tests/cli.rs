use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .current_dir(dir)
        .env("MORPHBENCH_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn step_by_step_commands_produce_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), r#"{"count": 20, "side": 32, "seed": 3}"#).unwrap();
    ok(&bench(&["synth", "--spec", "spec.json", "--out", "data"], d));
    assert!(d.join("data/catalog.csv").exists());

    let train = bench(
        &[
            "train",
            "--family",
            "residual",
            "--config",
            "tiny",
            "--data",
            "data",
            "--batch-size",
            "8",
            "--max-epochs",
            "1",
            "--seed",
            "4",
            "--out",
            "runs/residual",
        ],
        d,
    );
    ok(&train);
    for f in ["checkpoint.mbck", "train_log.csv", "train_summary.json"] {
        assert!(d.join("runs/residual").join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(d.join("runs/residual/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_loss,seconds\n1,"));

    let eval = bench(
        &[
            "eval",
            "--checkpoint",
            "runs/residual/checkpoint.mbck",
            "--data",
            "data",
            "--passes",
            "2",
            "--out",
            "runs/residual",
        ],
        d,
    );
    ok(&eval);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("weighted average"));

    ok(&bench(&["report", "--in", "runs", "--out", "runs/report"], d));
    let md = std::fs::read_to_string(d.join("runs/report/report.md")).unwrap();
    assert!(md.contains("| Question | Support | ResNet50 |"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(
        &["train", "--family", "transformer", "--data", "x", "--out", "y"],
        dir.path(),
    );
    assert!(!out.status.success());
    let out = bench(&["all", "--config", "missing.json"], dir.path());
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["report", "--in", ".", "--out", "r"])
        .current_dir(dir.path())
        .env("MORPHBENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
