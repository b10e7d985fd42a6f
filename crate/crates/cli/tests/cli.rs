use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn itar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itar")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = itar(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    itar(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus.bin");
    ok(&["synth", "--seed", "3", "--out", s(&corpus), "--truth", s(&dir.join("truth.tsv"))]);
    corpus
}

fn write_thresholds(dir: &Path) -> PathBuf {
    let path = dir.join("th.json");
    std::fs::write(&path, r#"{"theta_good": 0.6, "theta_bad": 0.3, "source": "test"}"#).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ingest_filters_and_reports_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bow = tmp.path().join("c.txt");
    std::fs::write(&bow, "d1 a:2 b:1 c:1\nd2 a:1 c:3\nd3 a:1 d:2\n").unwrap();
    let out = tmp.path().join("c.bin");
    let msg = ok(&["ingest", "--bow", s(&bow), "--df-min", "2", "--out", s(&out)]);
    assert!(msg.contains("vocabulary 2"), "{msg}");
    // dropping `a` empties d3, after which `c` is in every remaining document
    assert_eq!(code(&["ingest", "--bow", s(&bow), "--df-min", "2", "--df-max", "0.9", "--out", s(&out)]), 3);

    let seq = tmp.path().join("s.tsv");
    std::fs::write(&seq, "d1\tx y x\nd2\ty z\n").unwrap();
    ok(&["ingest", "--seq", s(&seq), "--out", s(&tmp.path().join("s.bin"))]);

    std::fs::write(&bow, "d1 a:1.5\n").unwrap();
    assert_eq!(code(&["ingest", "--bow", s(&bow), "--out", s(&out)]), 3);
    assert_eq!(code(&["ingest", "--bow", s(&tmp.path().join("missing.txt")), "--out", s(&out)]), 3);
    assert_eq!(code(&["ingest", "--seq", s(&seq), "--df-max", "1.5", "--out", s(&out)]), 2);
    assert_eq!(code(&["ingest", "--out", s(&out)]), 2);
}

#[test]
fn train_then_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let dir = tmp.path().join("plsa");
    ok(&["train", "--corpus", s(&corpus), "--model", "plsa", "--t", "5", "--top-words", "5", "--out", s(&dir)]);
    let trained = read_json(&dir.join("topics.json"));
    assert_eq!(trained["topics"].as_array().unwrap().len(), 5);
    let topic = &trained["topics"][0];
    for key in ["top_words", "coh_toptoken", "coh_intra", "n_t"] {
        assert!(!topic[key].is_null(), "{key} missing");
    }

    let report = tmp.path().join("eval.json");
    ok(&["evaluate", "--corpus", s(&corpus), "--phi", s(&dir.join("phi.tsv")), "--top-words", "5", "--out", s(&report)]);
    let evaluated = read_json(&report);
    let (a, b) = (trained["model"]["ppl"].as_f64().unwrap(), evaluated["model"]["ppl"].as_f64().unwrap());
    // Θ is refit for the stored Φ, so the fit can only get closer
    assert!(b <= a * (1.0 + 1e-6), "{b} vs {a}");
    assert_eq!(evaluated["topics"][0]["top_words"], trained["topics"][0]["top_words"]);

    ok(&["evaluate", "--corpus", s(&corpus), "--phi", s(&tmp.path().join("truth.tsv"))]);
    ok(&["train", "--corpus", s(&corpus), "--model", "sparse", "--t", "5", "--precision", "f32", "--out", s(&dir)]);
    assert_eq!(code(&["train", "--corpus", s(&corpus), "--model", "itar", "--t", "5", "--out", s(&dir)]), 2);
    assert_eq!(code(&["train", "--corpus", s(&corpus), "--model", "nope", "--t", "5", "--out", s(&dir)]), 2);
    assert_eq!(code(&["train", "--corpus", s(&corpus), "--out", s(&dir)]), 2);
}

#[test]
fn zero_phi_is_a_degenerate_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let phi = tmp.path().join("alien.tsv");
    std::fs::write(&phi, "token\ttopic_0\nunseen\t1\n").unwrap();
    assert_eq!(code(&["evaluate", "--corpus", s(&corpus), "--phi", s(&phi)]), 4);
}

#[test]
fn itar_runs_are_reproducible_and_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let th = write_thresholds(tmp.path());
    let config = tmp.path().join("itar.json");
    std::fs::write(&config, r#"{"max_iterations": 6, "em_iterations": 10, "top_words": 5, "tau_sift_bad": 100.0}"#)
        .unwrap();
    let run = |out: &Path, extra: &[&str]| {
        let mut args =
            vec!["itar", "--corpus", s(&corpus), "--t", "8", "--thresholds", s(&th), "--config", s(&config)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", s(out)]);
        ok(&args)
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, &["--ablation", "1-1-0", "--sift", "v2", "--max-iters", "3"]);
    run(&b, &["--ablation", "1-1-0", "--sift", "v2", "--max-iters", "3"]);
    for file in ["bank.jsonl", "history.jsonl", "phi.tsv", "topics.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let history = std::fs::read_to_string(a.join("history.jsonl")).unwrap();
    assert!(history.lines().count() <= 3);
    let banked: usize = history.lines().last().map(|l| serde_json::from_str::<Value>(l).unwrap()["bank_good"].as_u64().unwrap() as usize).unwrap();
    let bank = std::fs::read_to_string(a.join("bank.jsonl")).unwrap();
    assert_eq!(bank.lines().filter(|l| l.contains("\"label\":\"good\"")).count(), banked);

    assert_eq!(code(&["itar", "--corpus", s(&corpus), "--t", "8", "--out", s(&a)]), 2);
    assert_eq!(code(&["itar", "--corpus", s(&corpus), "--t", "8", "--thresholds", s(&th), "--ablation", "2-0-0", "--out", s(&a)]), 2);
    std::fs::write(tmp.path().join("bad.json"), "{").unwrap();
    let bad = tmp.path().join("bad.json");
    assert_eq!(code(&["itar", "--corpus", s(&corpus), "--t", "8", "--thresholds", s(&bad), "--out", s(&a)]), 2);
    assert_eq!(
        code(&["itar", "--corpus", s(&corpus), "--t", "8", "--thresholds", s(&th), "--criterion", "intratext", "--max-iters", "1", "--em-iters", "3", "--out", s(&a)]),
        0,
        "synthetic corpora keep word order"
    );
}

#[test]
fn thresholds_and_topicbank() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let th = tmp.path().join("th.json");
    ok(&["thresholds", "--corpus", s(&corpus), "--t", "6", "--runs", "2", "--em-iters", "10", "--top-words", "5", "--out", s(&th)]);
    let v = read_json(&th);
    assert!(v["theta_good"].as_f64().unwrap() >= v["theta_bad"].as_f64().unwrap());

    let out = tmp.path().join("tb");
    let msg = ok(&[
        "topicbank", "--corpus", s(&corpus), "--t", "6", "--variant", "topicbank2", "--iterations", "3",
        "--em-iters", "10", "--top-words", "5", "--thresholds", s(&th), "--out", s(&out),
    ]);
    assert!(msg.contains("perplexity"), "{msg}");
    assert_eq!(std::fs::read_to_string(out.join("history.jsonl")).unwrap().lines().count(), 3);
    assert_eq!(code(&["topicbank", "--corpus", s(&corpus), "--t", "6", "--variant", "lda", "--thresholds", s(&th), "--out", s(&out)]), 2);
}

#[test]
fn experiment_then_report_regenerates_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path());
    let config = tmp.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{
  "models": [
    {"name": "plsa", "T": 6, "runs": 2},
    {"name": "sparse", "T": 6, "runs": 2},
    {"name": "itar", "T": 6},
    {"name": "topicbank", "T": 6}
  ],
  "thresholds": {"mode": "pooled", "pool_runs": 2},
  "itar": {"max_iterations": 3, "tau_sift_v1": 100.0},
  "em_iterations": 10,
  "top_words": 5
}"#,
    )
    .unwrap();
    let out = tmp.path().join("exp");
    ok(&["experiment", "--config", s(&config), "--corpus", s(&corpus), "--out", s(&out)]);
    let again = tmp.path().join("report");
    ok(&["report", "--results", s(&out.join("results.json")), "--out", s(&again)]);
    for file in ["table.csv", "table.txt", "good_series.json"] {
        assert_eq!(
            std::fs::read(out.join("report").join(file)).unwrap(),
            std::fs::read(again.join(file)).unwrap(),
            "{file}"
        );
    }
    let table = std::fs::read_to_string(again.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert_eq!(code(&["experiment", "--config", s(&config), "--out", s(&out)]), 2);
    assert_eq!(code(&["report", "--results", s(&tmp.path().join("none.json")), "--out", s(&again)]), 3);
}
