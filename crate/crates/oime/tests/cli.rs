//! End-to-end runs of the `oime` binary on the fixture corpus.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn oime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oime")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A config with fixture paths and a tiny, quick model.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "profile": "desk",
        "syllables_path": fixture("syllables.txt"),
        "dict_path": fixture("dict.tsv"),
        "lexicon_path": fixture("lexicon.txt"),
        "vocab_path": dir.path().join("prep/vocab.tsv"),
        "model_checkpoint": dir.path().join("model.oime"),
        "hidden": 8, "ED": 8, "composer_hidden": 4, "epochs": 2,
    });
    std::fs::write(dir.path().join("config.json"), cfg.to_string()).unwrap();
    let prep = dir.path().join("prep");
    ok(oime(&["prepare", "--config", s(&dir.path().join("config.json")), "--corpus", s(&fixture("train.txt")), "--out-dir", s(&prep)]));
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(dir: &Path, out: &str) -> Vec<u8> {
    let cfg = dir.join("config.json");
    ok(oime(&["train", "--config", s(&cfg), "--data", s(&dir.join("prep/parallel.tsv")), "--out", s(&dir.join(out)), "--log", s(&dir.join("train.csv"))]));
    std::fs::read(dir.join(out)).unwrap()
}

#[test]
fn prepare_reports_the_corpus() {
    let dir = workspace();
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("prep/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["lines"], 200);
    assert_eq!(stats["skipped"], 0);
    let parallel = std::fs::read_to_string(dir.path().join("prep/parallel.tsv")).unwrap();
    assert_eq!(parallel.lines().count(), stats["sentences"].as_u64().unwrap() as usize);
    assert!(std::fs::read_to_string(dir.path().join("prep/vocab.tsv")).unwrap().contains("背景"));
}

#[test]
fn train_is_deterministic_and_feeds_eval_and_bench() {
    let dir = workspace();
    let d = dir.path();
    let a = train(d, "model.oime");
    let b = train(d, "again.oime");
    assert_eq!(a, b);
    assert_eq!(std::fs::read(d.join("model.oime.meta.json")).unwrap(), std::fs::read(d.join("again.oime.meta.json")).unwrap());
    let log = std::fs::read_to_string(d.join("train.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "epoch,lr,loss,sentences,words");
    assert_eq!(log.lines().count(), 3);

    let cfg = d.join("config.json");
    let stdout = ok(oime(&["eval", "--config", s(&cfg), "--test", s(&fixture("test_a.txt")), "--out", s(&d.join("metrics.csv")), "--top-k", "5"]));
    assert!(stdout.contains("top-1"), "{stdout}");
    let metrics = std::fs::read_to_string(d.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows[0], "metric,config,value");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("top1,beam=10;K=5;keep=1,"), "{}", rows[1]);

    ok(oime(&["bench", "--config", s(&cfg), "--test", s(&fixture("test_a.txt")), "--out", s(&d.join("bench.csv")), "--reps", "1"]));
    let bench = std::fs::read_to_string(d.join("bench.csv")).unwrap();
    assert_eq!(bench.lines().next().unwrap(), "fraction,ms_per_miu,top1,top5,mean_target_vocab");
    assert_eq!(bench.lines().count(), 5);

    ok(oime(&[
        "interlace", "--config", s(&cfg), "--domain-a", s(&fixture("test_a.txt")), "--domain-b", s(&fixture("domain_b.txt")),
        "--out", s(&d.join("inter.csv")), "--turn-log", s(&d.join("turns.csv")), "--train-every", "1000",
    ]));
    let inter = std::fs::read_to_string(d.join("inter.csv")).unwrap();
    assert_eq!(inter.lines().next().unwrap(), "group_index,segment_label,top1");
    assert_eq!(inter.lines().count(), std::fs::read_to_string(d.join("inter_frozen.csv")).unwrap().lines().count());
    let turns = std::fs::read_to_string(d.join("turns.csv")).unwrap();
    assert_eq!(turns.lines().next().unwrap(), "turn_id,pinyin,top1,chosen,rank_of_chosen,added_words,vocab_size");
    assert_eq!(turns.lines().count(), 1 + 71 + 104);
}

#[test]
fn repl_learns_a_typed_word_and_saves_state() {
    let dir = workspace();
    let d = dir.path();
    train(d, "model.oime");
    let state = d.join("state");
    let mut child = Command::new(env!("CARGO_BIN_EXE_oime"))
        .args(["repl", "--config", s(&d.join("config.json")), "--state-dir", s(&state), "--top-k", "50", "--beam", "50"])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all("beijing\n北京\nni\n9\n\n:q\n".as_bytes()).unwrap();
    let stdout = ok(child.wait_with_output().unwrap());
    assert!(stdout.contains("=> 北京  (learned 北京)"), "{stdout}");
    assert!(stdout.contains("no candidate 9"), "{stdout}");
    assert!(stdout.contains("cancelled"), "{stdout}");
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(state.join("state.json")).unwrap()).unwrap();
    assert_eq!(saved["turns"], 1);
    assert!(saved["vocab_tsv"].as_str().unwrap().contains("北京"));
}

#[test]
fn errors_map_to_exit_codes() {
    let out = oime(&["prepare", "--corpus", s(&fixture("train.txt")), "--out-dir", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2), "missing --syllables is a usage error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("--syllables"));

    let out = oime(&["prepare", "--syllables", "/nonexistent/s.txt", "--dict", s(&fixture("dict.tsv")), "--corpus", "x", "--out-dir", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"hiden": 3}"#).unwrap();
    let out = oime(&["eval", "--config", s(&cfg), "--test", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(3));

    let out = oime(&["eval", "--hidden", "0", "--test", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}
