use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::array;
use serde_json::Value;
use stancegen_core::sdmg::{ProjectionParams, SdmgParams, TensorFile};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stancegen"));
    c.env("RUST_LOG", "error");
    c
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

fn copy_fixture(dir: &Path) {
    for f in ["posts.jsonl", "comments.jsonl", "run.toml"] {
        std::fs::copy(fixture().join(f), dir.join(f)).unwrap();
    }
}

#[test]
fn version_flag() {
    let out = ok(bin().arg("--version").output().unwrap());
    assert_eq!(out.trim(), format!("stancegen {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn run_matches_golden_manifest() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture(dir.path());
    let stdout = ok(bin().args(["run", "--config"]).arg(dir.path().join("run.toml")).output().unwrap());
    assert!(stdout.contains("evaluate"), "{stdout}");
    let got: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture().join("manifest.golden.json")).unwrap()).unwrap();
    assert_eq!(got, golden);
}

#[test]
fn run_with_missing_corpus_fails_in_validation() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture(dir.path());
    std::fs::remove_file(dir.path().join("posts.jsonl")).unwrap();
    let out = bin().args(["run", "--config"]).arg(dir.path().join("run.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("posts.jsonl"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = fixture();
    let out = ok(bin()
        .args(["pipeline", "build", "--out"])
        .arg(d.join("corpus"))
        .arg("--posts")
        .arg(fx.join("posts.jsonl"))
        .arg("--comments")
        .arg(fx.join("comments.jsonl"))
        .output()
        .unwrap());
    assert_eq!(out.trim(), "samples=50 posts=14 comments=40 rejects=23");

    let out = ok(bin().args(["annotate", "coarse", "--corpus"]).arg(d.join("corpus")).output().unwrap());
    assert_eq!(out.trim(), "samples=50 flagged=13 unlabeled=0 enqueued=13");
    // Re-running does not enqueue twice.
    let out = ok(bin().args(["annotate", "coarse", "--corpus"]).arg(d.join("corpus")).output().unwrap());
    assert!(out.trim().ends_with("enqueued=0"), "{out}");

    let out = bin()
        .args(["annotate", "kappa", "--records"])
        .arg(d.join("corpus/annotation/queue.jsonl"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("two human labels"));
}

#[test]
fn kappa_from_records_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let mut lines = String::new();
    // Contingency [[20, 5], [10, 15]] gives kappa 0.4.
    let cells = [(20, "FAVOR", "FAVOR"), (5, "FAVOR", "AGAINST"), (10, "AGAINST", "FAVOR"), (15, "AGAINST", "AGAINST")];
    let mut i = 0;
    for (n, a, b) in cells {
        for _ in 0..n {
            for (who, s) in [("a", a), ("b", b)] {
                lines.push_str(&format!(
                    "{{\"annotator_id\":\"{who}\",\"sample_id\":\"s{i}\",\"stance\":\"{s}\",\"topic\":\"OTHER\",\"timestamp\":\"2024-01-01T00:00:00Z\"}}\n"
                ));
            }
            i += 1;
        }
    }
    std::fs::write(&path, lines).unwrap();
    let out = ok(bin().args(["annotate", "kappa", "--records"]).arg(&path).output().unwrap());
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["items"], 50);
    assert!((v["kappa"]["stance"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn split_and_emit_config() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture(dir.path());
    ok(bin().args(["run", "--config"]).arg(dir.path().join("run.toml")).output().unwrap());
    let out = ok(bin()
        .args(["gen", "split", "--ratio", "0.8", "--seed", "7", "--corpus"])
        .arg(dir.path().join("out/annotation/labeled_samples.jsonl"))
        .arg("--out")
        .arg(dir.path().join("sp"))
        .output()
        .unwrap());
    assert_eq!(out.trim(), "train=30 test=7 train_posts=10 test_posts=3");
    assert_eq!(
        std::fs::read(dir.path().join("sp/test.jsonl")).unwrap(),
        std::fs::read(dir.path().join("out/split/test.jsonl")).unwrap()
    );

    let out = ok(bin().args(["gen", "emit-config", "--lr", "1e-4", "--set", "batch_size=8"]).output().unwrap());
    let t: toml::Table = toml::from_str(&out).unwrap();
    assert_eq!(t["learning_rate"].as_float(), Some(1e-4));
    assert_eq!(t["batch_size"].as_integer(), Some(8));
    let bad = bin().args(["gen", "emit-config", "--lr", "-1"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn generation_and_eval_reproduce_run_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    copy_fixture(d);
    ok(bin().args(["run", "--config"]).arg(d.join("run.toml")).output().unwrap());
    let out = ok(bin()
        .args(["gen", "run", "--backend", "echo", "--requests"])
        .arg(d.join("out/generation/requests.jsonl"))
        .output()
        .unwrap());
    assert_eq!(out, std::fs::read_to_string(d.join("out/generation/responses.jsonl")).unwrap());

    ok(bin()
        .args(["eval", "run", "--items"])
        .arg(d.join("out/eval/items.jsonl"))
        .arg("--out")
        .arg(d.join("ev"))
        .output()
        .unwrap());
    assert_eq!(
        std::fs::read(d.join("ev/scores.jsonl")).unwrap(),
        std::fs::read(d.join("out/eval/scores.jsonl")).unwrap()
    );
    let csv = ok(bin()
        .args(["eval", "report", "--group-by", "target", "--format", "csv", "--scores"])
        .arg(d.join("ev/scores.jsonl"))
        .output()
        .unwrap());
    assert_eq!(csv, std::fs::read_to_string(d.join("out/eval/report.csv")).unwrap());
}

#[test]
fn fuse_with_identity_projection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let params = SdmgParams {
        projection: ProjectionParams::identity(2),
        prompt: array![0.0, 0.0],
    };
    params.save(&d.join("params.json")).unwrap();
    let mut v = TensorFile::new();
    v.insert("visual", &array![1.5, -2.0]);
    v.write(&d.join("v.json")).unwrap();
    let mut t = TensorFile::new();
    t.insert("text", &array![0.25, 4.0]);
    t.write(&d.join("t.json")).unwrap();
    // One token gets all the attention, so the attended output is W_v v = v.
    for (mode, expected) in [("concat", vec![1.5, -2.0, 0.25, 4.0]), ("add", vec![1.75, 2.0])] {
        let out = ok(bin()
            .args(["sdmg", "fuse", "--mode", mode, "--params"])
            .arg(d.join("params.json"))
            .arg("--visual")
            .arg(d.join("v.json"))
            .arg("--text")
            .arg(d.join("t.json"))
            .output()
            .unwrap());
        let v: Value = serde_json::from_str(&out).unwrap();
        let fused: Vec<f64> = serde_json::from_value(v["fused"].clone()).unwrap();
        assert_eq!(fused, expected, "{mode}");
        assert_eq!(v["attention_weights"], serde_json::json!([1.0]));
    }
}

#[test]
fn gradcheck_reports_every_target() {
    let out = ok(bin().args(["sdmg", "gradcheck", "--eps", "1e-5"]).output().unwrap());
    for t in ["project_qkv", "tsa_pooled", "fuse_concat", "fuse_add", "prompt"] {
        assert!(out.contains(t), "{out}");
    }
    let bad = bin().args(["sdmg", "gradcheck", "--eps", "1"]).output().unwrap();
    assert!(!bad.status.success());
}
