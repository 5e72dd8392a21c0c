#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use std::path::PathBuf;
use std::sync::Arc;

use stagewise_core::domain::record::{read_corpus, read_lines};
use stagewise_core::domain::{FeedbackEvent, Record, Timestamp, UserQuery};
use stagewise_core::retrieval::build_index;
use stagewise_core::session::Session;
use stagewise_core::{Pipeline, PipelineConfig};

pub const GOLDEN_SESSION: &str = "golden-sigir";
pub const GOLDEN_QUERY: &str = "Plan a trip to attend SIGIR 2025";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn pipeline() -> Arc<Pipeline> {
    let index = build_index(read_corpus(&fixture("corpus.jsonl")).unwrap()).unwrap();
    Arc::new(Pipeline::new(Arc::new(index), PipelineConfig::default()))
}

pub fn golden_query() -> UserQuery {
    UserQuery::new("golden-query", "alice", GOLDEN_QUERY, "2025-03-10T09:00:00.000Z".parse::<Timestamp>().unwrap())
}

pub fn golden_events() -> Vec<FeedbackEvent> {
    read_lines::<Record>(&fixture("golden_events.jsonl"))
        .unwrap()
        .into_iter()
        .map(|r| match r {
            Record::FeedbackEvent(e) => e,
            other => panic!("unexpected record {other:?}"),
        })
        .collect()
}

pub fn golden_session(pipeline: Arc<Pipeline>) -> Session {
    let mut s = Session::open(pipeline, GOLDEN_SESSION, golden_query()).unwrap();
    for e in golden_events() {
        s.submit(e).unwrap();
    }
    s
}

/// Compares `actual` with a committed file, rewriting it when
/// UPDATE_GOLDEN is set.
pub fn check_golden(name: &str, actual: &str) -> bool {
    let path = fixture(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    std::fs::read_to_string(&path).map(|s| s == actual).unwrap_or(false)
}
