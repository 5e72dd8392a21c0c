use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const GOLDEN_QUERY: &str = "Plan a trip to attend SIGIR 2025";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn stagewise(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagewise"))
        .args(args)
        .env("NEXT_SEARCH_DATA_DIR", data)
        .env_remove("NEXT_SEARCH_CONFIG")
        .stdin(Stdio::null())
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn golden(data: &Path) {
    let corpus = fixture("corpus.jsonl");
    ok(stagewise(data, &["index", "build", "--corpus", corpus.to_str().unwrap()]));
    let id =
        ok(stagewise(data, &["session", "open", "--query", GOLDEN_QUERY, "--user", "alice", "--id", "golden-sigir"]));
    assert_eq!(id.trim(), "golden-sigir");
    let events = fixture("golden_events.jsonl");
    ok(stagewise(data, &["session", "feedback", "--id", "golden-sigir", "--file", events.to_str().unwrap()]));
}

#[test]
fn replay_prints_the_live_answer() {
    let dir = tempfile::tempdir().unwrap();
    golden(dir.path());
    let state: serde_json::Value =
        serde_json::from_str(&ok(stagewise(dir.path(), &["session", "show", "--id", "golden-sigir"]))).unwrap();
    assert_eq!(state["log_offset"], 11);
    let answer = ok(stagewise(dir.path(), &["session", "replay", "--id", "golden-sigir"]));
    assert!(answer.contains("Padova Congress Center"), "{answer}");
    let plan: serde_json::Value = serde_json::from_str(&ok(stagewise(
        dir.path(),
        &["session", "show", "--id", "golden-sigir", "--stage", "decomposition"],
    )))
    .unwrap();
    let ids: Vec<&str> =
        plan["sub_queries"].as_array().unwrap().iter().map(|q| q["sub_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["Q2", "Q1", "Q3", "Q5"]);
}

#[test]
fn stale_feedback_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    golden(dir.path());
    let first = std::fs::read_to_string(fixture("golden_events.jsonl")).unwrap().lines().next().unwrap().to_string();
    let stale = dir.path().join("stale.jsonl");
    std::fs::write(&stale, first).unwrap();
    let out =
        stagewise(dir.path(), &["session", "feedback", "--id", "golden-sigir", "--file", stale.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stale_sequence"));
}

#[test]
fn missing_session_and_bad_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    ok(stagewise(dir.path(), &["index", "build", "--corpus", corpus.to_str().unwrap()]));
    assert_eq!(stagewise(dir.path(), &["session", "show", "--id", "nope"]).status.code(), Some(1));
    assert_eq!(stagewise(dir.path(), &["session", "open"]).status.code(), Some(2));
    assert_eq!(
        stagewise(dir.path(), &["compile", "--from", "2025-03-15", "--to", "2025-03-10"]).status.code(),
        Some(2)
    );
}

#[test]
fn commands_without_an_index_explain_how_to_build_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = stagewise(dir.path(), &["session", "open", "--query", GOLDEN_QUERY]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index build"));
}

#[test]
fn compile_counts_the_golden_session() {
    let dir = tempfile::tempdir().unwrap();
    golden(dir.path());
    let out = ok(stagewise(dir.path(), &["compile", "--from", "2025-03-10", "--to", "2025-03-15"]));
    let compiled: serde_json::Value = serde_json::from_str(&out).unwrap();
    let counts = &compiled["manifest"]["counts"];
    assert_eq!(counts["decomposition"], 1);
    assert_eq!(counts["generation"], 2);
    assert!(counts["retrieval"].as_u64().unwrap() >= 2);
    assert!(Path::new(compiled["path"].as_str().unwrap()).is_dir());
}

#[test]
fn agent_and_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    golden(dir.path());
    let learned: serde_json::Value =
        serde_json::from_str(&ok(stagewise(dir.path(), &["agent", "learn", "--user", "alice"]))).unwrap();
    assert_eq!(learned["new_sessions"], serde_json::json!(["golden-sigir"]));
    let again: serde_json::Value =
        serde_json::from_str(&ok(stagewise(dir.path(), &["agent", "learn", "--user", "alice"]))).unwrap();
    assert_eq!(again["new_sessions"], serde_json::json!([]));

    let prompt = ok(stagewise(dir.path(), &["agent", "prompt", "--session", "golden-sigir", "--stage", "generation"]));
    assert!(!prompt.trim().is_empty());

    let template: serde_json::Value = serde_json::from_str(&ok(stagewise(
        dir.path(),
        &["store", "package", "--session", "golden-sigir", "--price", "5", "--publish"],
    )))
    .unwrap();
    let tid = template["template_id"].as_str().unwrap().to_string();
    let matches: serde_json::Value = serde_json::from_str(&ok(stagewise(
        dir.path(),
        &["store", "match", "--query", "Plan a trip to attend ECIR 2026"],
    )))
    .unwrap();
    assert_eq!(matches[0][1]["template_id"], tid.as_str());

    let broke = stagewise(dir.path(), &["store", "purchase", "--template", &tid, "--user", "bob"]);
    assert_eq!(broke.status.code(), Some(2));
    ok(stagewise(dir.path(), &["store", "grant", "--user", "bob", "--credits", "10"]));
    ok(stagewise(dir.path(), &["store", "purchase", "--template", &tid, "--user", "bob"]));
    let balances: serde_json::Value = serde_json::from_str(&ok(stagewise(dir.path(), &["store", "balances"]))).unwrap();
    assert_eq!(balances["balances"]["bob"], 5);
}
