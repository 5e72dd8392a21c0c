mod common;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use common::*;
use stagewise_core::domain::{Action, Actor, FeedbackEvent, Rating, RelevanceLabel, RetrievalFilter, Timestamp};
use stagewise_core::offline::{
    compile, export_batch, load_logs, reconcile, Batch, LogInput, Polarity, SidecarKind, Signal, Window,
};
use stagewise_core::session::{encode_log, Session};

const Q1: &str = "What are the best flight options from [User's City] to the [conference location]?";
const Q2: &str = "Where and when will SIGIR 2025 be held?";
const Q3: &str = "What are the recommended hotels near the conference venue?";
const Q4: &str = "What are some sightseeing attractions near the conference venue?";
const Q5: &str = "What is the registration process and cost for SIGIR 2025?";

fn day() -> Window {
    Window::days(NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(), NaiveDate::from_ymd_opt(2025, 3, 11).unwrap()).unwrap()
}

fn at(min: u32) -> Timestamp {
    format!("2025-03-10T10:{min:02}:00.000Z").parse().unwrap()
}

fn golden_input() -> LogInput {
    let s = golden_session(pipeline());
    (GOLDEN_SESSION.into(), Ok(s.log().records().to_vec()))
}

fn log_with(id: &str, actions: Vec<Action>) -> LogInput {
    let mut s = Session::open(pipeline(), id, golden_query()).unwrap();
    for (i, a) in actions.into_iter().enumerate() {
        s.submit(FeedbackEvent::new(id, i as u64 + 1, Actor::Human, at(i as u32), a)).unwrap();
    }
    (id.into(), Ok(s.log().records().to_vec()))
}

fn check_disjoint_and_traceable(batch: &Batch) {
    for r in &batch.retrieval {
        let pos: BTreeSet<_> = r.positive_chunks.iter().collect();
        assert!(r.negative_chunks.iter().all(|c| !pos.contains(c)), "{r:?}");
        assert_eq!(r.actor_mix.values().sum::<u32>() as usize, r.source_events.len());
    }
    for g in &batch.generation {
        assert_ne!(g.chosen_text, g.rejected_text);
        assert!(!g.source_events.is_empty());
        assert_eq!(g.actor_mix.values().sum::<u32>() as usize, g.source_events.len());
    }
    for d in &batch.decomposition {
        assert_eq!(d.actor_mix.values().sum::<u32>() as usize, d.source_events.len());
    }
}

#[test]
fn golden_decomposition_pair() {
    let batch = compile(&[golden_input()], &day());
    assert_eq!(batch.decomposition.len(), 1);
    let pair = &batch.decomposition[0];
    assert_eq!(pair.negative_plan, [Q1, Q2, Q3, Q4]);
    assert_eq!(pair.positive_plan, [Q2, Q1, Q3, Q5]);
    assert_eq!(pair.edit_count, 3);
    assert_eq!(pair.source_events, ["golden-e01", "golden-e02", "golden-e03"]);
}

#[test]
fn golden_retrieval_labels() {
    let batch = compile(&[golden_input()], &day());
    assert!(batch.retrieval.len() >= 2);
    let q2 = batch.retrieval.iter().find(|r| r.sub_id == "Q2").unwrap();
    assert_eq!(q2.sub_query, Q2);
    assert!(q2.positive_chunks.contains(&"D2".to_string()));
    assert!(q2.positive_chunks.contains(&"D1".to_string()));
    assert!(q2.negative_chunks.contains(&"D3".to_string()));
    let d1 = q2.notes.iter().find(|n| n.chunk_id == "D1").unwrap();
    assert_eq!((d1.signal, d1.weight), (Signal::Label, 0.5));
    let d2 = q2.notes.iter().find(|n| n.chunk_id == "D2").unwrap();
    // the later rerank supersedes the label; both are positive
    assert_eq!((d2.polarity, d2.signal), (Polarity::Positive, Signal::Rerank));
    check_disjoint_and_traceable(&batch);
}

#[test]
fn golden_generation_pairs() {
    let batch = compile(&[golden_input()], &day());
    assert_eq!(batch.generation.len(), 2);
    let dates = batch.generation.iter().find(|g| g.section_id == "sec-Q2").unwrap();
    assert!(dates.rejected_text.contains("University of Padua") && dates.rejected_text.contains("July 15-19"));
    assert!(dates.chosen_text.contains("Padova Congress Center") && dates.chosen_text.contains("July 13–17"));
    let hotels = batch.generation.iter().find(|g| g.section_id == "sec-Q3").unwrap();
    assert!(hotels.chosen_text.contains("B&B Hotel Padova (90€/night"));
    assert!(!hotels.rejected_text.contains("B&B"));
    assert_eq!(hotels.edit_distance, strsim::levenshtein(&hotels.rejected_text, &hotels.chosen_text));
    assert!(batch.accepted.iter().any(|s| s.kind == SidecarKind::AcceptedAnswer));
}

#[test]
fn golden_reconciles() {
    let logs = [golden_input()];
    let batch = compile(&logs, &day());
    let r = reconcile(&logs, &day(), &batch);
    assert_eq!(r.events_in_window, 11);
    assert!(r.is_complete(), "{r:?}");
    assert_eq!(r.in_samples + r.in_sidecar, 11);
}

#[test]
fn no_decomposition_events_no_pair() {
    let batch = compile(&[log_with("s1", vec![Action::Rate { rating: Rating::Like, comment: None }])], &day());
    assert!(batch.decomposition.is_empty());
    assert!(batch.generation.is_empty());
    assert_eq!(batch.accepted.len(), 1);
    assert_eq!(batch.accepted[0].kind, SidecarKind::AcceptedAnswer);
}

#[test]
fn ten_sessions_four_with_edits() {
    let mut logs = Vec::new();
    for i in 0..10 {
        let actions = match i % 5 {
            0 => vec![Action::RemoveSubQuery { sub_id: "Q4".into() }],
            1 if i < 5 => {
                vec![Action::ReorderSubQueries { permutation: ["Q2", "Q1", "Q3", "Q4"].map(String::from).to_vec() }]
            }
            2 if i > 5 => {
                vec![Action::RefineConstraint { sub_id: "Q3".into(), key: "budget".into(), value: "150€".into() }]
            }
            _ => vec![Action::AnnotateRelevance {
                sub_id: "Q2".into(),
                chunk_id: "D2".into(),
                label: RelevanceLabel::Relevant,
            }],
        };
        logs.push(log_with(&format!("s{i:02}"), actions));
    }
    // independent count: logs holding at least one decomposition-stage event
    let expected = logs
        .iter()
        .filter(|(_, r)| {
            r.as_ref().unwrap().iter().any(|rec| matches!(rec, stagewise_core::session::LogRecord::FeedbackEvent(e) if e.stage == stagewise_core::domain::Stage::Decomposition))
        })
        .count();
    assert_eq!(expected, 4);
    let batch = compile(&logs, &day());
    assert_eq!(batch.decomposition.len(), 4);
    assert!(reconcile(&logs, &day(), &batch).is_complete());
}

#[test]
fn citations_alone_are_positives() {
    let logs = [log_with("s1", vec![Action::CorrectFact { section_id: "sec-Q2".into(), note: "wrong dates".into() }])];
    let batch = compile(&logs, &day());
    let Ok(records) = &logs[0].1 else { unreachable!() };
    let session = Session::replay(pipeline(), records.clone()).unwrap();
    let cited = &session.state().answer.section("sec-Q2").unwrap().citations;
    assert!(cited.contains(&"D2".to_string()));
    let q2 = batch.retrieval.iter().find(|r| r.sub_id == "Q2").unwrap();
    assert_eq!(&q2.positive_chunks, cited);
    assert!(q2.notes.iter().all(|n| n.signal == Signal::Citation && n.event_id.is_none()));
    assert!(q2.source_events.is_empty());
}

#[test]
fn latest_label_wins() {
    let label = |l| Action::AnnotateRelevance { sub_id: "Q2".into(), chunk_id: "D2".into(), label: l };
    let logs = [log_with("s1", vec![label(RelevanceLabel::Relevant), label(RelevanceLabel::Irrelevant)])];
    let batch = compile(&logs, &day());
    let q2 = batch.retrieval.iter().find(|r| r.sub_id == "Q2").unwrap();
    assert!(q2.negative_chunks.contains(&"D2".to_string()));
    assert!(!q2.positive_chunks.contains(&"D2".to_string()));
    check_disjoint_and_traceable(&batch);
}

#[test]
fn filter_exclusions_are_negatives() {
    let logs = [log_with("s1", vec![Action::SetFilter { filter: RetrievalFilter::block(&["sigir.org"]) }])];
    let batch = compile(&logs, &day());
    assert!(batch.retrieval.iter().any(|r| r.notes.iter().any(|n| n.signal == Signal::FilterExclusion)));
    check_disjoint_and_traceable(&batch);
    assert!(reconcile(&logs, &day(), &batch).is_complete());
}

#[test]
fn identical_edit_goes_to_sidecar() {
    let s = Session::open(pipeline(), "s1", golden_query()).unwrap();
    let text = s.state().answer.section("sec-Q1").unwrap().text.clone();
    let logs = [log_with("s1", vec![Action::EditSection { section_id: "sec-Q1".into(), new_text: text.clone() }])];
    let batch = compile(&logs, &day());
    assert!(batch.generation.is_empty());
    assert_eq!(batch.accepted[0].kind, SidecarKind::AcceptedSection);
    assert_eq!(batch.accepted[0].text.as_deref(), Some(text.as_str()));
}

#[test]
fn window_end_is_exclusive() {
    let logs = [golden_input()];
    let w =
        Window::new("2025-03-10T09:00:00.000Z".parse().unwrap(), "2025-03-10T09:04:00.000Z".parse().unwrap()).unwrap();
    let batch = compile(&logs, &w);
    assert_eq!(reconcile(&logs, &w, &batch).events_in_window, 3);
    assert!(batch.generation.is_empty());
    assert_eq!(batch.decomposition.len(), 1);
    let later =
        Window::days(NaiveDate::from_ymd_opt(2025, 3, 11).unwrap(), NaiveDate::from_ymd_opt(2025, 3, 12).unwrap())
            .unwrap();
    assert_eq!(compile(&logs, &later), Batch::default());
}

#[test]
fn corrupt_logs_are_skipped_and_counted() {
    let logs = vec![golden_input(), ("broken".into(), Err("line 1: bad json".into()))];
    let batch = compile(&logs, &day());
    assert_eq!(batch.skipped_logs, ["broken"]);
    assert_eq!(batch.decomposition.len(), 1);
}

#[test]
fn export_is_atomic_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let batch = compile(&[golden_input()], &day());
    let (path, m1) = export_batch(&batch, &day(), dir.path()).unwrap();
    assert_eq!(path, dir.path().join("2025-03-10"));
    let first = std::fs::read(path.join("generation.samples")).unwrap();
    let (_, m2) = export_batch(&batch, &day(), dir.path()).unwrap();
    assert_eq!(m1.content_hash, m2.content_hash);
    assert_eq!(first, std::fs::read(path.join("generation.samples")).unwrap());
    assert_eq!(m1.counts["decomposition"], 1);
    assert_eq!(m1.counts["generation"], 2);
    assert!(m1.counts["retrieval"] >= 2);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["2025-03-10"]);
}

#[test]
fn empty_window_exports_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let (path, m) = export_batch(&Batch::default(), &day(), dir.path()).unwrap();
    for f in ["decomposition.samples", "retrieval.samples", "generation.samples"] {
        assert_eq!(std::fs::read_to_string(path.join(f)).unwrap(), "");
    }
    assert!(m.counts.values().all(|c| *c == 0));
}

#[test]
fn logs_load_from_session_directories() {
    let dir = tempfile::tempdir().unwrap();
    let s = golden_session(pipeline());
    std::fs::create_dir_all(dir.path().join(GOLDEN_SESSION)).unwrap();
    std::fs::write(dir.path().join(GOLDEN_SESSION).join("log"), encode_log(s.log().records())).unwrap();
    std::fs::write(dir.path().join("junk.log"), "not json\n").unwrap();
    let logs = load_logs(dir.path()).unwrap();
    assert_eq!(logs.len(), 2);
    let batch = compile(&logs, &day());
    assert_eq!(batch.skipped_logs, ["junk.log"]);
    assert_eq!(batch.decomposition.len(), 1);
}
