use std::path::{Path, PathBuf};
use std::time::Instant;

use stancegen_core::run::{run_end_to_end, RunConfig, RunManifest};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

fn run_into(out: &Path) -> RunManifest {
    let (mut config, base) = RunConfig::read(&fixture_dir().join("run.toml")).unwrap();
    config.paths.output = out.to_path_buf();
    run_end_to_end(&config, &base).unwrap()
}

fn golden() -> RunManifest {
    let s = std::fs::read_to_string(fixture_dir().join("manifest.golden.json")).unwrap();
    serde_json::from_str(&s).unwrap()
}

#[test]
fn fixture_matches_golden_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let m = run_into(dir.path());
    assert!(start.elapsed().as_secs_f64() < 60.0);
    if std::env::var_os("STANCEGEN_BLESS").is_some() {
        let s = serde_json::to_string_pretty(&m).unwrap() + "\n";
        std::fs::write(fixture_dir().join("manifest.golden.json"), s).unwrap();
    }
    assert_eq!(m.stages[0].counts["samples"], 50);
    let g = golden();
    assert_eq!(m.config_sha256, g.config_sha256);
    assert_eq!(m.input_sha256, g.input_sha256);
    assert_eq!(m.artifact_hashes(), g.artifact_hashes());
    assert_eq!(m, g);
}

#[test]
fn rerun_is_identical_and_written_manifest_has_no_absolute_paths() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_into(a.path());
    let mb = run_into(b.path());
    assert_eq!(ma, mb);
    let written = std::fs::read_to_string(a.path().join("manifest.json")).unwrap();
    assert!(!written.contains(a.path().to_str().unwrap()));
    for (path, sha) in ma.artifact_hashes() {
        let bytes = std::fs::read(b.path().join(&path)).unwrap();
        assert_eq!(stancegen_core::digest::sha256_hex(&bytes), sha, "{path}");
    }
}

#[test]
fn rerun_into_same_directory_replaces_queue() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_into(dir.path());
    let second = run_into(dir.path());
    assert_eq!(first, second);
}
