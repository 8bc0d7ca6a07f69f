use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const KB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/fixture_kb.tsv");
const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/fixture_corpus.jsonl");

fn icdlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icdlink"))
        .args(args)
        .env_remove("ICDLINK_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn annotate(dir: &Path, name: &str, scorer: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["annotate", "--kb", KB, "--corpus", CORPUS, "--scorer", scorer, "--out"];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    let o = icdlink(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

fn eval_json(predictions: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["eval", "--kb", KB, "--corpus", CORPUS, "--predictions", predictions.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = icdlink(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn kb_validate_reports_counts() {
    let o = icdlink(&["kb", "validate", "--kb", KB]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "3 entities, 1 chapter, 2 subchapters");
}

#[test]
fn kb_duplicate_code_exits_one() {
    let dir = TempDir::new().unwrap();
    let kb = dir.path().join("kb.tsv");
    let text = fs::read_to_string(KB).unwrap();
    let first_row = text.lines().nth(1).unwrap();
    fs::write(&kb, format!("{text}{first_row}\n")).unwrap();
    let o = icdlink(&["kb", "validate", "--kb", kb.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("A01.1"), "{}", stderr(&o));
}

#[test]
fn missing_file_exits_two() {
    let o = icdlink(&["kb", "validate", "--kb", "/nonexistent/kb.tsv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot open"));
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        vec!["annotate", "--kb", KB, "--corpus", CORPUS, "--scorer", "beam:3"],
        vec!["annotate", "--kb", KB, "--corpus", CORPUS, "--scorer", "random:0"],
        vec!["annotate", "--kb", KB, "--corpus", CORPUS, "--scorer", "ngram:2"],
        vec!["annotate", "--kb", KB, "--corpus", CORPUS, "--truncate", "0"],
        vec!["kb", "frobnicate"],
        vec![],
    ] {
        assert_eq!(icdlink(&args).status.code(), Some(64), "{args:?}");
    }
    assert_eq!(icdlink(&["--help"]).status.code(), Some(0));
    assert_eq!(icdlink(&["--version"]).status.code(), Some(0));
}

#[test]
fn oracle_pipeline_is_perfect() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "oracle.jsonl", "oracle", &["--jobs", "2"]);
    let r = eval_json(&preds, &[]);
    assert_eq!(r["micro"], 1.0);
    assert_eq!(r["macro"], 1.0);
    assert_eq!(r["mlc"]["combined"]["f1"], 1.0);
    assert!(r["mlc"]["PCS"].is_null());
    assert_eq!(r["few_shot"], serde_json::json!({}));
}

#[test]
fn one_flipped_code_gives_three_quarters() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "oracle.jsonl", "oracle", &[]);
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // D2 mention 1: A01.1 -> A01.2
    lines[1]["assignments"][1]["pred_code"] = "A01.2".into();
    let flipped = dir.path().join("flipped.jsonl");
    let body: Vec<String> = lines.iter().map(Value::to_string).collect();
    fs::write(&flipped, body.join("\n")).unwrap();
    let r = eval_json(&flipped, &[]);
    assert_eq!(r["micro"], 0.75);
    assert_eq!(r["macro"], 0.75);
    assert_eq!(r["partial"]["partial"], 1.0);
}

#[test]
fn seeded_random_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = annotate(dir.path(), "a.jsonl", "random:42", &["--jobs", "1"]);
    let b = annotate(dir.path(), "b.jsonl", "random:42", &["--jobs", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = annotate(dir.path(), "c.jsonl", "random", &["--seed", "42"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn ngram_scorer_runs_with_training_corpus() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "n.jsonl", "ngram:3", &["--train-corpus", CORPUS]);
    let r = eval_json(&preds, &["--train-corpus", CORPUS]);
    assert!(r["micro"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["few_shot"]["1"]["support"], 1);
    assert_eq!(r["few_shot"]["5"]["support"], 4);
}

#[test]
fn eval_rejects_mismatched_documents() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "oracle.jsonl", "oracle", &[]);
    let first = fs::read_to_string(&preds).unwrap().lines().next().unwrap().to_string();
    let partial = dir.path().join("partial.jsonl");
    fs::write(&partial, first).unwrap();
    let o = icdlink(&["eval", "--kb", KB, "--corpus", CORPUS, "--predictions", partial.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("D2"), "{}", stderr(&o));
}

#[test]
fn eval_table_uses_two_decimals() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "oracle.jsonl", "oracle", &[]);
    let o = icdlink(&[
        "eval", "--kb", KB, "--corpus", CORPUS, "--predictions", preds.to_str().unwrap(), "--format", "table",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    assert!(table.contains("Micro") && table.contains("100.00"), "{table}");
}

#[test]
fn truncation_drops_straddling_mentions() {
    let dir = TempDir::new().unwrap();
    let preds = annotate(dir.path(), "t.jsonl", "oracle", &["--truncate", "30"]);
    let lines: Vec<Value> = fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // D1 keeps [6,21) and loses [26,41); D2 keeps [0,15) and loses [22,37)
    assert_eq!(lines[0]["assignments"].as_array().unwrap().len(), 1);
    assert_eq!(lines[1]["assignments"].as_array().unwrap().len(), 1);
    let r = eval_json(&preds, &["--truncate", "30"]);
    assert_eq!(r["micro"], 1.0);
}

#[test]
fn stats_counts_match_fixture() {
    let o = icdlink(&["corpus", "stats", "--corpus", CORPUS, "--train-corpus", CORPUS]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["reports"], 2);
    assert_eq!(s["diagnoses"]["samples"], 4);
    assert_eq!(s["distinct_codes"], 2);
    assert_eq!(s["one_shot_codes"], 1);
    // train = test: A01.2 is 1-shot, both codes are 5-shot
    assert_eq!(s["few_shot_codes"]["1"], 1);
    assert_eq!(s["few_shot_codes"]["5"], 2);
}

#[test]
fn stats_on_empty_corpus_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = icdlink(&["corpus", "stats", "--corpus", empty.to_str().unwrap(), "--format", "table"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.trim_end().ends_with(" 0")), "{}", stdout(&o));
}

#[test]
fn corpus_validate_checks_codes_against_kb() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, fs::read_to_string(CORPUS).unwrap().replace("A01.2", "Q99.9")).unwrap();
    let o = icdlink(&["corpus", "validate", "--corpus", CORPUS, "--kb", KB]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "2 documents, 4 mentions");
    let o = icdlink(&["corpus", "validate", "--corpus", bad.to_str().unwrap(), "--kb", KB]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Q99.9"));
}

#[test]
fn corpus_offset_error_exits_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, fs::read_to_string(CORPUS).unwrap().replacen("\"start\": 6", "\"start\": 7", 1)).unwrap();
    let o = icdlink(&["corpus", "validate", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
