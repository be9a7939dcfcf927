use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emt::synth::{gaussian_samples, recurring_contexts};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn emt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emt")).args(args).output().unwrap()
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn of_kind<'a>(recs: &'a [Value], kind: &str) -> Vec<&'a Value> {
    recs.iter().filter(|r| r["record"] == kind).collect()
}

fn repeat_csv(dir: &Path, contexts: usize, rows: usize) -> PathBuf {
    let path = dir.join("repeat.csv");
    recurring_contexts(contexts, 5, 5, rows, &mut ChaCha8Rng::seed_from_u64(2))
        .unwrap()
        .write_csv(&path)
        .unwrap();
    path
}

#[test]
fn run_writes_one_summary_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = repeat_csv(dir.path(), 20, 300);
    let out = emt(&["run", "--dataset", data.to_str().unwrap(), "--learner", "emt", "--seeds", "2", "--take", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    assert_eq!(of_kind(&recs, "summary").len(), 2);
    let header = &recs[0];
    assert_eq!(header["record"], "config");
    for flag in ["epsilon", "leaf_capacity", "eta", "budget", "hash_bits", "seeds", "take", "alpha"] {
        assert!(header["config"].get(flag).is_some(), "{flag} missing from header");
    }
    for s in of_kind(&recs, "summary") {
        assert_eq!(s["t"], 100);
        let r = s["progressive_reward"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r));
    }
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = repeat_csv(dir.path(), 20, 300);
    let dest = dir.path().join("out.jsonl");
    let out = emt(&[
        "run", "--dataset", data.to_str().unwrap(), "--learner", "parametric", "--seeds", "1",
        "--take", "50", "--output", dest.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dest).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("\"summary\"")).count(), 1);
}

#[test]
fn unknown_learner_lists_valid_names() {
    let out = emt(&["run", "--dataset", "x.csv", "--learner", "knn"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("emt, emt-noself, parametric, pemt"), "{err}");
}

#[test]
fn validation_failures_exit_one_and_name_the_culprit() {
    let dir = tempfile::tempdir().unwrap();
    let data = repeat_csv(dir.path(), 20, 300);
    let d = data.to_str().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["run", "--dataset", "/nonexistent/d.csv", "--learner", "emt"], "/nonexistent/d.csv"),
        (&["run", "--dataset", d, "--learner", "emt", "--epsilon", "1.5"], "--epsilon"),
        (&["run", "--dataset", d, "--learner", "emt", "--label", "class"], "class"),
        (&["compare", "--dataset", d, "--learner", "emt"], "--learner"),
    ];
    for (args, needle) in cases {
        let out = emt(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn compare_finds_memory_winner_on_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let data = repeat_csv(dir.path(), 50, 4000);
    let out = emt(&[
        "compare", "--dataset", data.to_str().unwrap(), "--learner", "emt", "--learner", "parametric",
        "--seeds", "10", "--take", "4000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    let pairs = of_kind(&recs, "pair");
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0]["winner"], "emt");
    let matrix = of_kind(&recs, "win_matrix")[0];
    assert_eq!(matrix["wins"], serde_json::json!([["—", 1], [0, "—"]]));
}

#[test]
fn diagnose_reports_explained_variance() {
    let dir = tempfile::tempdir().unwrap();
    let line = dir.path().join("line.csv");
    std::fs::write(&line, "x,label\n0.5,a\n1.5,b\n-2,a\n").unwrap();
    let out = emt(&["diagnose", "--dataset", line.to_str().unwrap()]);
    assert!(out.status.success());
    let rec = &records(&out)[0];
    assert_eq!((rec["rows"].as_u64(), rec["features"].as_u64(), rec["classes"].as_u64()), (Some(3), Some(1), Some(2)));
    assert!((rec["top_eigen_explained"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    // Analytic ratio 9 / (9 + 1).
    let xs = gaussian_samples(&[9.0, 1.0], &DMatrix::identity(2, 2), 20_000, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let mut csv = String::from("a,b,label\n");
    for (i, x) in xs.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", x[0], x[1], i % 2));
    }
    let diag = dir.path().join("diag.csv");
    std::fs::write(&diag, csv).unwrap();
    let out = emt(&["diagnose", "--dataset", diag.to_str().unwrap()]);
    let ratio = records(&out)[0]["top_eigen_explained"].as_f64().unwrap();
    assert!((ratio - 0.9).abs() < 0.01, "{ratio}");

    let missing = emt(&["diagnose", "--dataset", "/nonexistent.csv"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn no_header_with_index_label() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.csv");
    let mut csv = String::new();
    for i in 0..60 {
        csv.push_str(&format!("{},{},{}\n", i % 3, (i * 7 % 11) as f64 / 11.0, (i * 5 % 13) as f64));
    }
    std::fs::write(&path, csv).unwrap();
    let out = emt(&[
        "run", "--dataset", path.to_str().unwrap(), "--no-header", "--label", "0", "--learner", "pemt",
        "--seeds", "2", "--take", "60",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(of_kind(&records(&out), "summary").len(), 2);
}
