use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clarinet_core::midi::{parse_smf, write_smf};
use clarinet_core::retrieval::Index;
use clarinet_core::synth::write_corpus;
use clarinet_core::{Note, NoteSequence, TempoMap};
use tempfile::TempDir;

fn clarinet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clarinet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Temp dir holding `corpus/` with `n` synthetic pieces.
fn corpus(n: usize) -> (TempDir, Vec<PathBuf>) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(&dir.path().join("corpus"), n, 7, 24.0).unwrap();
    (dir, paths)
}

fn indexed(n: usize, extra: &[&str]) -> TempDir {
    let (dir, _) = corpus(n);
    let mut args = vec!["index", "corpus", "-o", "idx.json"];
    args.extend(extra);
    let o = clarinet(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn extract_writes_monophonic_melody() {
    let (dir, paths) = corpus(1);
    let o = clarinet(
        &["extract", paths[0].to_str().unwrap(), "-o", "mel.mid", "--extractor", "modified"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (mel, _) = parse_smf(&std::fs::read(dir.path().join("mel.mid")).unwrap()).unwrap();
    assert!(!mel.is_empty());
    assert!(mel.is_monophonic());
}

#[test]
fn stability_of_uniform_input_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let notes = (0..8).map(|i| Note::new(60 + i, 80, f64::from(i) * 0.5, f64::from(i) * 0.5 + 0.5)).collect();
    let bytes = write_smf(&NoteSequence::new(notes), &TempoMap::default());
    std::fs::write(dir.path().join("u.mid"), bytes).unwrap();
    let o = clarinet(&["extract", "u.mid", "--stability"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["duration_cv"], 0.0);
    assert_eq!(report["short_note_count"], 0);
}

#[test]
fn unknown_criteria_is_a_usage_error() {
    let (dir, paths) = corpus(1);
    let o = clarinet(&["extract", paths[0].to_str().unwrap(), "--stability", "--criteria", "loudest"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn index_counts_documents() {
    let dir = indexed(3, &[]);
    let index = Index::load(&dir.path().join("idx.json")).unwrap();
    assert_eq!(index.documents.len(), 3);
    assert!(index.documents.iter().all(|d| d.meta.key.is_none()));
}

#[test]
fn processed_index_carries_metadata() {
    let dir = indexed(3, &["--process"]);
    let index = Index::load(&dir.path().join("idx.json")).unwrap();
    assert!(index.build_config.process);
    assert!(index.documents.iter().all(|d| d.meta.key.is_some() && d.meta.tempo_bpm.is_some()));
}

#[test]
fn empty_corpus_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = clarinet(&["index", "empty", "-o", "idx.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

fn rows(out: &str) -> Vec<Vec<String>> {
    out.lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

#[test]
fn exact_clip_ranks_first() {
    let dir = indexed(5, &[]);
    let o = clarinet(
        &["query", "idx.json", "corpus/piece_003.mid", "--start", "6", "--duration", "5", "--method", "rsa-note"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = rows(&stdout(&o));
    assert_eq!(table[0][1], "piece_003");
    assert_eq!(table[0][2], "1.000");
}

#[test]
fn top_limits_rows_and_flags_beat_config() {
    let dir = indexed(5, &[]);
    std::fs::write(dir.path().join("cfg.json"), r#"{"top": 2, "method": "rsa-time"}"#).unwrap();
    let q = ["query", "idx.json", "corpus/piece_001.mid", "--duration", "5"];
    let o = clarinet(&[&q[..], &["--top", "3"]].concat(), dir.path());
    assert_eq!(rows(&stdout(&o)).len(), 3);
    let o = clarinet(&[&q[..], &["--config", "cfg.json"]].concat(), dir.path());
    assert_eq!(rows(&stdout(&o)).len(), 2);
    let o = clarinet(&[&q[..], &["--config", "cfg.json", "--top", "4"]].concat(), dir.path());
    assert_eq!(rows(&stdout(&o)).len(), 4);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = indexed(2, &[]);
    std::fs::write(dir.path().join("cfg.json"), r#"{"tpo": 2}"#).unwrap();
    let o = clarinet(&["query", "idx.json", "corpus/piece_001.mid", "--config", "cfg.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mongeau_sankoff_needs_processed_index() {
    let dir = indexed(2, &[]);
    let o = clarinet(&["query", "idx.json", "corpus/piece_001.mid", "--method", "mongeau-sankoff"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("processing"), "{}", stderr(&o));

    let dir = indexed(2, &["--process"]);
    let o = clarinet(&["query", "idx.json", "corpus/piece_001.mid", "--method", "mongeau-sankoff"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn eval_is_reproducible() {
    let dir = indexed(6, &[]);
    let run = |out: &str| {
        let o = clarinet(
            &["eval", "idx.json", "--generate", "10", "5", "42", "--omit-timing", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("report.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn eval_grid_rows() {
    let dir = indexed(6, &[]);
    let o = clarinet(
        &[
            "eval", "idx.json", "--generate", "8", "5", "1", "--methods", "rsa-time,rsa-note", "--extractors",
            "skyline,modified", "--out", "rep",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(dir.path().join("rep/report.json").exists());
}

#[test]
fn eval_with_saved_queries() {
    let dir = indexed(4, &[]);
    let o = clarinet(
        &["genqueries", "idx.json", "--count", "5", "--seed", "3", "-o", "q.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = clarinet(&["eval", "idx.json", "--queries", "q.json", "--methods", "rsa-note", "--out", "rep"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("rsa-note:s=1,modified,unprocessed,1.0000"));
}

#[test]
fn eval_missing_index_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = clarinet(&["eval", "nope.json", "--generate", "3", "5", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = clarinet(&["eval", "nope.json", "--generate", "3", "5", "1", "--methods", "dtw"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
