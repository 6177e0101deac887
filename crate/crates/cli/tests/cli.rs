use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn tcgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcgw"))
        .args(args)
        .env_remove("TCGW_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One default run shared by the read-only tests.
fn default_run() -> &'static Path {
    static RUN: OnceLock<TempDir> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = tcgw(&["run", "--out", p(&dir.path().join("run"))]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    })
    .path()
    .join("run")
    .leak()
}

#[test]
fn run_reports_ten_anchors() {
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(default_run().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["public_chain"]["confirmed_anchors"], 10);
    assert_eq!(report["all_verified"], true);
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(
        tcgw(&["run", "--config", p(&cfg), "--out", p(dir.path())])
            .status
            .code(),
        Some(2)
    );

    std::fs::write(&cfg, r#"{"fields": [], "epochs": 1}"#).unwrap();
    assert_eq!(
        tcgw(&["run", "--config", p(&cfg), "--out", p(dir.path())])
            .status
            .code(),
        Some(2)
    );

    let missing = dir.path().join("nope.json");
    assert_eq!(
        tcgw(&["run", "--config", p(&missing), "--out", p(dir.path())])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bad_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tcgw"))
        .args(["run", "--out", p(dir.path())])
        .env("TCGW_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let out = tcgw(&["run", "--config", cfg, "--out", p(dir.path())]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("report.json")).unwrap(),
        std::fs::read(default_run().join("report.json")).unwrap()
    );
}

#[test]
fn verify_honest_artifacts_without_touching_them() {
    let run = default_run();
    let chain = run.join("public.tcgw");
    let before = std::fs::read(&chain).unwrap();
    let out = tcgw(&["verify", "--archive", p(&run.join("archive")), "--chain", p(&chain)]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.ends_with(": ok")).count(), 10);
    assert_eq!(std::fs::read(&chain).unwrap(), before);
}

#[test]
fn verify_names_the_corrupted_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("archive");
    std::fs::create_dir(&archive).unwrap();
    for entry in std::fs::read_dir(default_run().join("archive")).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, archive.join(path.file_name().unwrap())).unwrap();
    }
    let victim = archive.join("field-almond.epoch-1.tcgw");
    let mut bytes = std::fs::read(&victim).unwrap();
    let at = bytes.len() - 20;
    bytes[at] ^= 0x40;
    std::fs::write(&victim, bytes).unwrap();

    let out = tcgw(&[
        "verify",
        "--archive",
        p(&archive),
        "--chain",
        p(&default_run().join("public.tcgw")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("field-almond epoch 1"), "{stderr}");
}

#[test]
fn verify_missing_inputs_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tcgw(&[
        "verify",
        "--archive",
        p(&dir.path().join("x")),
        "--chain",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trace_is_canonical_and_stable() {
    let chain = default_run().join("public.tcgw");
    let a = tcgw(&["trace", "--chain", p(&chain), "--channel", "field-tomato"]);
    let b = tcgw(&["trace", "--chain", p(&chain), "--channel", "field-tomato"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let value: serde_json::Value = serde_json::from_str(text.trim_end()).unwrap();
    assert_eq!(
        tcgw_core::canonical::canonical_json(&value).unwrap(),
        text.trim_end().as_bytes()
    );
    assert!(text.contains("temperature_c"));

    let unknown = tcgw(&["trace", "--chain", p(&chain), "--channel", "nowhere"]);
    assert!(unknown.status.success());
    let view: serde_json::Value = serde_json::from_slice(&unknown.stdout).unwrap();
    assert_eq!(view["summaries"], serde_json::json!([]));

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        tcgw(&["trace", "--chain", p(&dir.path().join("none")), "--channel", "x"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn inspect_dumps_blocks() {
    let out = tcgw(&["inspect", p(&default_run().join("archive/field-tomato.epoch-0.tcgw"))]);
    assert!(out.status.success());
    let dump: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump["chain_id"], "field-tomato");
    assert_eq!(dump["verification"]["ok"], true);
    assert!(dump["blocks"].as_array().unwrap().len() > 1);
}

#[test]
fn bench_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = tcgw(&[
        "bench",
        "--levels",
        "0,100,1000",
        "--verify-mode",
        "off",
        "--out",
        p(dir.path()),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().next(), Some("transactions,occupied_mb,batch_seconds"));
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(fit["memory"]["r_squared"].as_f64().unwrap() >= 0.99);

    assert_eq!(
        tcgw(&["bench", "--levels", "100,10", "--out", p(dir.path())])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tcgw(&["bench", "--verify-mode", "maybe", "--out", p(dir.path())])
            .status
            .code(),
        Some(2)
    );
}
