use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.json")
}

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialogue-rl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline(dir: &Path) {
    let config = tiny_config();
    let config = config.to_str().unwrap();
    for stage in ["gen-corpus", "pretrain", "train-coherence", "train-rl", "simulate"] {
        ok(dir, &[stage, "--config", config]);
    }
    ok(dir, &["eval", "--config", config, "--checkpoint", "tiny/checkpoints/pretrained.json", "--name", "pretrained"]);
    ok(dir, &["eval", "--config", config]);
    ok(dir, &["report", "--config", config]);
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn tiny_pipeline_is_bit_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (path, bytes) in &sa {
        assert!(bytes == &sb[path], "{} differs between runs", path.display());
    }
    for name in [
        "corpus.jsonl",
        "pretrain-loss.csv",
        "coherence-report.json",
        "curves.csv",
        "simulations.jsonl",
        "usage-matrix.csv",
        "metrics-pretrained.json",
        "metrics-policy.json",
        "report.csv",
        "run-manifest.json",
    ] {
        assert!(sa.contains_key(&Path::new("tiny/out").join(name)), "missing {name}");
    }
    for name in ["pretrained.json", "coherence.json", "policy.json"] {
        assert!(sa.contains_key(&Path::new("tiny/checkpoints").join(name)), "missing {name}");
    }

    let report = String::from_utf8(sa[Path::new("tiny/out/report.csv")].clone()).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("policy,") && rows[2].starts_with("pretrained,"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&sa[Path::new("tiny/out/run-manifest.json")]).unwrap();
    for stage in ["gen-corpus", "pretrain", "train-coherence", "train-rl", "simulate", "eval:policy", "report"] {
        assert_eq!(manifest[stage]["seed"], 7, "{stage}");
    }
    assert_eq!(manifest["train-rl"]["config"]["K"], 2);

    let curves = String::from_utf8(sa[Path::new("tiny/out/curves.csv")].clone()).unwrap();
    assert_eq!(curves.lines().count(), 1 + 6);
}

#[test]
fn flags_override_the_config_and_seed_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    let config = config.to_str().unwrap();
    ok(dir.path(), &["gen-corpus", "--config", config, "--output", "a"]);
    ok(dir.path(), &["gen-corpus", "--config", config, "--output", "b", "--seed", "8"]);
    let a = fs::read(dir.path().join("a/corpus.jsonl")).unwrap();
    let b = fs::read(dir.path().join("b/corpus.jsonl")).unwrap();
    assert_ne!(a, b);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("b/run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["gen-corpus"]["seed"], 8);
}

#[test]
fn missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    let config = config.to_str().unwrap();
    ok(dir.path(), &["gen-corpus", "--config", config]);
    let out = cli(dir.path(), &["eval", "--config", config, "--checkpoint", "nowhere/model.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere/model.json"), "{stderr}");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"lr_rl": 0}"#).unwrap();
    let out = cli(dir.path(), &["gen-corpus", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lr_rl"));

    let out = cli(dir.path(), &["gen-corpus", "--k", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('K'));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["gen-corpus", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn report_without_metrics_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    let out = cli(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eval"));
}
