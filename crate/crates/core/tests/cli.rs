//! End-to-end flows through the `tbn` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbn"))
        .args(args)
        .output()
        .expect("spawn tbn")
}

fn ok(args: &[&str]) -> Output {
    let out = tbn(args);
    assert!(
        out.status.success(),
        "tbn {args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

fn trained_workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let model = dir.path().join("model.json");
    ok(&[
        "synth",
        "--dialogues",
        "150",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    ok(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    Workspace {
        _dir: dir,
        corpus,
        model,
    }
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ingest_reports_corpus_shape_and_info_gain() {
    let ws = trained_workspace();
    let lagged = ws.corpus.with_extension("csv");
    let out = ok(&[
        "ingest",
        "--corpus",
        ws.corpus.to_str().unwrap(),
        "--lagged-out",
        lagged.to_str().unwrap(),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["dialogues"], serde_json::json!(150));
    assert_eq!(summary["k"], serde_json::json!(3));
    assert!(summary["lagged_pairs"].as_u64().unwrap() > 0);
    // the planted persistence carries measurable information
    assert!(summary["info_gain_bits"]["find-food"].as_f64().unwrap() > 0.05);
    let header = std::fs::read_to_string(&lagged)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("book-food__t,"));
    assert!(header.ends_with("__dialogue_id,__t"));
}

#[test]
fn predict_orders_posterior_and_gates() {
    let ws = trained_workspace();
    let out = ok(&[
        "predict",
        "--model",
        ws.model.to_str().unwrap(),
        "--evidence",
        "find-food",
        "--progress",
        "early",
    ]);
    let text = stdout(&out);
    assert!(text.contains("posterior:"));
    assert!(text.contains("gated (tau=0.5, top-k=5):"));
    // persistence: find-food should survive the gate given find-food evidence
    let gated = text.split("gated").nth(1).unwrap();
    assert!(gated.contains("find-food"), "gated section: {gated}");
}

#[test]
fn predict_rejects_unknown_intent() {
    let ws = trained_workspace();
    let out = tbn(&[
        "predict",
        "--model",
        ws.model.to_str().unwrap(),
        "--evidence",
        "find-unicorn",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("find-unicorn"));
}

#[test]
fn insight_emits_block_for_grounded_utterance() {
    let ws = trained_workspace();
    let out = ok(&[
        "insight",
        "--model",
        ws.model.to_str().unwrap(),
        "--utterance",
        "i want to find a food",
        "--turn",
        "0",
        "--turns-total",
        "6",
    ]);
    let text = stdout(&out);
    assert!(text.starts_with("[CAUSAL INSIGHT]"), "got: {text}");
    assert!(text.contains("find-food"));
    assert!(text.contains("p=0."));
}

#[test]
fn insight_with_impossible_gate_prints_nothing() {
    let ws = trained_workspace();
    let out = ok(&[
        "insight",
        "--model",
        ws.model.to_str().unwrap(),
        "--utterance",
        "i want to find a food",
        "--tau",
        "1.0",
    ]);
    assert!(stdout(&out).is_empty());
}

#[test]
fn insight_rejects_empty_utterance() {
    let ws = trained_workspace();
    let out = tbn(&[
        "insight",
        "--model",
        ws.model.to_str().unwrap(),
        "--utterance",
        "",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_rank_writes_all_methods_and_random_dag_block() {
    let ws = trained_workspace();
    let out_path = ws.corpus.with_file_name("rank.json");
    ok(&[
        "eval-rank",
        "--corpus",
        ws.corpus.to_str().unwrap(),
        "--model",
        ws.model.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--random-dag-trials",
        "3",
    ]);
    let report = read_json(&out_path);
    for method in ["temporal_bn", "marginal", "bigram", "random"] {
        let m = &report["methods"][method];
        assert!(m["mrr"].as_f64().unwrap() > 0.0, "{method}: {m}");
        assert!(m["recall_at"]["5"].as_f64().unwrap() <= 1.0);
    }
    let cmp = &report["random_dag_comparison"];
    assert_eq!(cmp["trials"], serde_json::json!(3));
    assert!(cmp["learned_recall5"].is_number());
}

#[test]
fn replay_report_contains_both_arms() {
    let ws = trained_workspace();
    let out_path = ws.corpus.with_file_name("replay.json");
    ok(&[
        "replay",
        "--corpus",
        ws.corpus.to_str().unwrap(),
        "--model",
        ws.model.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let report = read_json(&out_path);
    let agg = &report["guided"]["aggregate"];
    let base = agg["auc_baseline_mean"].as_f64().unwrap();
    let guided = agg["auc_guided_mean"].as_f64().unwrap();
    assert!(guided >= base);
    assert!(report["baseline_only"]["auc_guided_mean"].is_number());
    assert_eq!(report["tau"], serde_json::json!(0.5));
}

#[test]
fn stability_reports_planted_edge() {
    let ws = trained_workspace();
    let out_path = ws.corpus.with_file_name("stability.json");
    ok(&[
        "stability",
        "--corpus",
        ws.corpus.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let report = read_json(&out_path);
    assert_eq!(report["stability"]["folds"], serde_json::json!(5));
    assert_eq!(report["stability"]["backward_edge_count"], serde_json::json!(0));
    let edges = report["stability"]["edges"].as_array().unwrap();
    assert!(edges
        .iter()
        .any(|e| e["source"] == "find-food__t" && e["target"] == "find-food__t1"));
}

#[test]
fn synth_accepts_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        serde_json::json!({
            "vocabulary": ["find-cab"],
            "persistence": {"find-cab": 1.0},
            "spawn": 0.0,
            "dialogues": 4,
            "turns_range": [3, 3],
            "seed": 9
        })
        .to_string(),
    )
    .unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    ok(&[
        "synth",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&corpus).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("\"find-cab\""));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = tbn(&["train", "--corpus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_exits_with_one() {
    let out = tbn(&["ingest", "--corpus", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}
