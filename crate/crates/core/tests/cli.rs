use std::path::Path;
use std::process::{Command, Output};

use thz_jcs::experiment::{DatasetFile, Manifest};

const TINY: &str = r#"
seed = 11
[dataset]
train = 30
validate = 10
test = 20
[gnn]
embedding_dim = 8
head_layer_sizes = [8]
iterations = 40
batch_size = 8
[scenario.counts]
spv = 3
comm = 1
sense = 1
[sweeps]
spv_counts = [3]
target_counts = []
embedding_dims = []
train_topologies = 20
test_topologies = 10
iterations = 20
"#;

fn thz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thz-jcs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();

    let stdout = ok(&thz(&["dataset", "--smoke", "--config", &cfg, "--out", o]));
    assert!(stdout.contains("Train"), "{stdout}");
    let train = DatasetFile::load(&out.join("dataset/train.json")).unwrap();
    assert_eq!(train.records.len() + train.infeasible_skipped, 30);

    ok(&thz(&["train", "--smoke", "--config", &cfg, "--out", o]));
    let loss = std::fs::read_to_string(out.join("model/loss_hetero.csv")).unwrap();
    assert!(loss.starts_with("iteration,loss\n"));
    assert_eq!(loss.lines().count(), 41);

    let stdout = ok(&thz(&["evaluate", "--sweeps", "--smoke", "--config", &cfg, "--out", o]));
    for scheme in ["proposed", "baseline_a", "baseline_b", "baseline_c"] {
        assert!(stdout.contains(scheme), "{stdout}");
    }
    let metrics = std::fs::read_to_string(out.join("eval/metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "scheme,instances,sum_rate_mean,raw_sum_rate_mean,subset_accuracy,per_label_accuracy,feasibility_rate,\
         ratio_mean,ratio_ci_low,ratio_ci_high,config_hash\n"
    ));
    assert!(std::fs::read_to_string(out.join("eval/sweeps.csv"))
        .unwrap()
        .contains("spv_count,3,proposed"));

    let stdout = ok(&thz(&[
        "explain",
        "--instance",
        "0",
        "--smoke",
        "--config",
        &cfg,
        "--out",
        o,
    ]));
    assert!(stdout.contains("links"));
    let explain: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("explain.json")).unwrap()).unwrap();
    assert_eq!(explain["vehicles"].as_array().unwrap().len(), 5);

    // Every manifest carries the same hash as the resolved config.
    let hash = train.config_hash.clone();
    for sub in ["dataset", "model", "eval"] {
        let m: Manifest =
            serde_json::from_str(&std::fs::read_to_string(out.join(sub).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.config_hash, hash);
        for f in &m.files {
            assert!(out.join(sub).join(&f.file).exists());
        }
    }
    assert_eq!(explain["config_hash"], hash.as_str());
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&thz(&[
        "dataset",
        "--smoke",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        a.to_str().unwrap(),
    ]));
    ok(&thz(&[
        "dataset",
        "--smoke",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--out",
        b.to_str().unwrap(),
    ]));
    let ta = std::fs::read(a.join("dataset/train.json")).unwrap();
    let tb = std::fs::read(b.join("dataset/train.json")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();

    let bad = write_config(dir.path(), "[gnn]\nembedding_dim = 6\n");
    let out = thz(&["dataset", "--config", &bad, "--out", o]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple of 4"));

    let out = thz(&["train", "--smoke", "--out", o]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.json"));

    let huge = write_config(dir.path(), "enumeration_budget = 10\n");
    let out = thz(&["dataset", "--smoke", "--config", &huge, "--out", o]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));

    let missing = dir.path().join("nope.toml");
    let out = thz(&["dataset", "--config", missing.to_str().unwrap(), "--out", o]);
    assert!(!out.status.success());
}
