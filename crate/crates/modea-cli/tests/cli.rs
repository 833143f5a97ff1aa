//! End-to-end checks of the binary: exit codes, stdout/stderr discipline,
//! deterministic artifacts, and the run-manifest contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn modea(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modea"))
        .args(args)
        .current_dir(dir)
        .env_remove("MODEA_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_modules_prints_thirteen_mutation_rows() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = modea(&["list-modules", "--category", "mutation"], tmp.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows: Vec<&str> = out
        .stdout
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| std::str::from_utf8(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 13, "mutation category lists 13 variants");
    assert!(rows.iter().all(|r| r.contains("mutation")));
    assert!(tmp.path().join("runs/list-modules/manifest.json").exists());

    let bad = modea(&["list-modules", "--category", "sorting"], tmp.path());
    assert_eq!(bad.status.code(), Some(1), "unknown category is exit 1");
}

#[test]
fn generate_is_deterministic_and_machine_silent() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let args = |out: &str| {
        [
            "generate", "--space", "de", "--count", "3", "--seed", "7", "--out", out,
        ]
        .map(String::from)
    };
    let a = modea(
        &args("a").iter().map(String::as_str).collect::<Vec<_>>(),
        tmp.path(),
    );
    assert!(a.status.success(), "stderr: {}", stderr(&a));
    assert!(a.stdout.is_empty(), "machine output never goes to stdout");
    let b = modea(
        &args("b").iter().map(String::as_str).collect::<Vec<_>>(),
        tmp.path(),
    );
    assert!(b.status.success());

    for i in 0..3 {
        let name = format!("structure-{i:03}.json");
        let fa = fs::read(tmp.path().join("a").join(&name)).expect("file a");
        let fb = fs::read(tmp.path().join("b").join(&name)).expect("file b");
        assert_eq!(fa, fb, "{name} differs between identical invocations");
    }
    let manifest = fs::read_to_string(tmp.path().join("a/manifest.json")).expect("manifest");
    let m: serde_json::Value = serde_json::from_str(&manifest).expect("manifest parses");
    assert_eq!(m["command"], "generate");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["artifacts"].as_array().map(Vec::len), Some(3));
    assert!(m["registry_hash"].as_str().is_some());
}

#[test]
fn the_output_root_honors_the_environment_override() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = Command::new(env!("CARGO_BIN_EXE_modea"))
        .args(["generate", "--space", "pso_ga", "--count", "1", "--seed", "3"])
        .current_dir(tmp.path())
        .env("MODEA_OUT", tmp.path().join("elsewhere"))
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(tmp
        .path()
        .join("elsewhere/generate/structure-000.json")
        .exists());
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn validate_accepts_generated_structures_and_flags_tampering() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let gen = modea(
        &[
            "generate", "--space", "de", "--count", "1", "--seed", "5", "--out", "g",
        ],
        tmp.path(),
    );
    assert!(gen.status.success());
    let file = tmp.path().join("g/structure-000.json");

    let ok = modea(&["validate", file.to_str().unwrap()], tmp.path());
    assert!(ok.status.success(), "stderr: {}", stderr(&ok));

    // Reverse the trunk so the chain starts with a non-initialization
    // module; validation must point at the offending position.
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&file).expect("structure")).expect("json");
    let trunk = v["trunk"].as_array().expect("trunk array").clone();
    v["trunk"] = trunk.into_iter().rev().collect::<Vec<_>>().into();
    let tampered = tmp.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();

    let bad = modea(&["validate", tampered.to_str().unwrap()], tmp.path());
    assert_eq!(bad.status.code(), Some(1), "tampered file is exit 1");
    let err = stderr(&bad);
    assert!(
        err.contains("position"),
        "violation is position-annotated: {err}"
    );
}

#[test]
fn unknown_flags_exit_two_with_usage() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = modea(&["generate", "--nonsense"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("--nonsense"));
    assert!(err.to_lowercase().contains("usage"));

    let sub = modea(&["transmogrify"], tmp.path());
    assert_eq!(sub.status.code(), Some(2), "unknown subcommand is exit 2");
}

#[test]
fn train_then_finetune_then_inspect_round_trip() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = tmp.path().join("desk.cfg");
    fs::write(&cfg, "epochs = 7\nlr = 0.002\n").unwrap();

    let train = modea(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--epochs",
            "1",
            "--horizon",
            "5",
            "--nstep",
            "5",
            "--batch-size",
            "4",
            "--kappa",
            "1",
            "--seed",
            "3",
            "--label",
            "smoke",
            "--out",
            "t",
        ],
        tmp.path(),
    );
    assert!(train.status.success(), "stderr: {}", stderr(&train));
    assert!(train.stdout.is_empty(), "training talks only to stderr");
    assert!(stderr(&train).contains("epoch"));
    assert!(stderr(&train).contains("parameters"));

    let dir = tmp.path().join("t");
    assert!(dir.join("smoke-latest.json").exists());
    assert!(dir.join("smoke-log.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    // The flag overrides the config file; untouched file entries survive.
    assert_eq!(manifest["config"]["train"]["epochs"], 1);
    assert_eq!(manifest["config"]["train"]["lr"], 0.002);

    let checkpoint = dir.join("smoke-latest.json");
    let finetune = modea(
        &[
            "finetune",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--task-set",
            "train",
            "--epochs",
            "0",
            "--horizon",
            "5",
            "--out",
            "f",
        ],
        tmp.path(),
    );
    assert!(finetune.status.success(), "stderr: {}", stderr(&finetune));
    assert!(tmp.path().join("f/finetune-latest.json").exists());

    let inspect = modea(&["inspect-run", "t"], tmp.path());
    assert!(inspect.status.success(), "stderr: {}", stderr(&inspect));
    let report = stdout(&inspect);
    assert!(report.contains("command:       train"));
    assert!(report.contains("seed:          3"));
    assert!(report.contains("[present]"));
}

#[test]
fn evaluate_writes_reports_and_worker_count_does_not_change_them() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let args = |out: &str, workers: &str| {
        [
            "evaluate",
            "--task-set",
            "train",
            "--runs",
            "1",
            "--horizon",
            "3",
            "--seed",
            "1",
            "--baseline",
            "random",
            "--baseline",
            "original",
            "--workers",
            workers,
            "--out",
            out,
        ]
        .map(String::from)
    };
    let a = modea(
        &args("ea", "0").iter().map(String::as_str).collect::<Vec<_>>(),
        tmp.path(),
    );
    assert!(a.status.success(), "stderr: {}", stderr(&a));
    assert!(a.stdout.is_empty());
    let b = modea(
        &args("eb", "1").iter().map(String::as_str).collect::<Vec<_>>(),
        tmp.path(),
    );
    assert!(b.status.success(), "stderr: {}", stderr(&b));

    for name in [
        "train-random-perf.csv",
        "train-original-perf.csv",
        "train-summary.csv",
        "train-bounds.json",
    ] {
        let fa = fs::read(tmp.path().join("ea").join(name)).expect("report a");
        let fb = fs::read(tmp.path().join("eb").join(name)).expect("report b");
        assert_eq!(fa, fb, "{name} depends on worker count");
    }
    let perf = fs::read_to_string(tmp.path().join("ea/train-random-perf.csv")).unwrap();
    assert_eq!(perf.lines().count(), 5, "header plus H+1 rows");
    assert!(perf.starts_with("step,performance"));

    let missing = modea(
        &["evaluate", "--task-set", "nowhere", "--runs", "1"],
        tmp.path(),
    );
    assert_eq!(missing.status.code(), Some(1), "unknown task set is exit 1");
    let agent = modea(
        &["evaluate", "--baseline", "agent", "--runs", "1"],
        tmp.path(),
    );
    assert_eq!(
        agent.status.code(),
        Some(1),
        "agent baseline without a checkpoint is exit 1"
    );
}
