mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagewise_core::domain::{Action, Actor, AnswerStyle, FeedbackEvent, Layout, Rating, Stage, Timestamp, UserQuery};
use stagewise_core::session::{Session, StageOutputs};
use stagewise_core::store::{
    apply_template, match_templates, package_template, DebugTemplate, StepAction, Store, StoreError, TemplateStep,
    UsageKind, INITIAL_ESCROW,
};

fn at(min: u32) -> Timestamp {
    format!("2025-03-11T08:{min:02}:00.000Z").parse().unwrap()
}

fn golden_template() -> (Session, DebugTemplate) {
    let s = golden_session(pipeline());
    let t = package_template(s.log().records(), "SIGIR trip", 5, false, at(0)).unwrap();
    (s, t)
}

fn outputs(s: &Session) -> StageOutputs {
    s.state().outputs()
}

#[test]
fn golden_template_has_one_step_per_debug_event() {
    let (_, t) = golden_template();
    let expected = golden_events().iter().filter(|e| e.stage != Stage::Final).count();
    assert_eq!(expected, 10);
    assert_eq!(t.steps.len(), expected);
    assert_eq!(t.author_id, "alice");
    assert_eq!(t.source_session, GOLDEN_SESSION);
    assert_eq!(t.steps[0].action, StepAction::RemoveSubQuery { sub_position: 3 });
    assert_eq!(t.steps[2].action, StepAction::ReorderSubQueries { order: vec![1, 0, 2, 3] });
    assert_eq!(
        t.steps[1].action,
        StepAction::AddSubQuery {
            text: "What is the registration process and cost for {event}?".into(),
            insert_position: 3,
            constraints: vec![]
        }
    );
    assert_eq!(t.query_pattern.slots["event"], "SIGIR 2025");
}

#[test]
fn template_reproduces_source_session() {
    let (author, t) = golden_template();
    let mut fresh = Session::open(pipeline(), "replayed", golden_query()).unwrap();
    let report = apply_template(&t, &mut fresh, at(1)).unwrap();
    assert_eq!(report.applied.len(), 10);
    assert!(report.skipped.is_empty());
    assert_eq!(outputs(&fresh), outputs(&author));
    assert!(fresh.log().events().all(|e| e.actor == Actor::TemplateReplay));
}

#[test]
fn slots_follow_the_new_query() {
    let (_, t) = golden_template();
    let q = UserQuery::new("q2", "bob", "Plan a trip to attend ECIR 2026", at(2));
    let mut s = Session::open(pipeline(), "ecir", q).unwrap();
    let report = apply_template(&t, &mut s, at(3)).unwrap();
    assert!(!report.applied.is_empty());
    let texts = s.state().plan.texts();
    assert!(texts.contains(&"What is the registration process and cost for ECIR 2026?".to_string()), "{texts:?}");
}

#[test]
fn unpublishable_sessions() {
    let mut s = Session::open(pipeline(), "s1", golden_query()).unwrap();
    s.submit(FeedbackEvent::new("s1", 1, Actor::Human, at(0), Action::Rate { rating: Rating::Like, comment: None }))
        .unwrap();
    assert!(matches!(package_template(s.log().records(), "x", 0, false, at(0)), Err(StoreError::Unpublishable(_))));

    let mut s = Session::open(pipeline(), "s2", golden_query()).unwrap();
    s.submit(FeedbackEvent::new("s2", 1, Actor::Human, at(0), Action::RemoveSubQuery { sub_id: "Q4".into() })).unwrap();
    assert!(matches!(package_template(s.log().records(), "x", 0, false, at(0)), Err(StoreError::Unpublishable(_))));
    assert_eq!(package_template(s.log().records(), "x", 0, true, at(0)).unwrap().steps.len(), 1);
}

#[test]
fn matching_ranks_and_thresholds() {
    let (_, t) = golden_template();
    let mut twin = t.clone();
    twin.template_id = "t-000000000000".into();
    let other = DebugTemplate { template_id: "t-zzz".into(), ..t.clone() };
    let all = [other.clone(), t.clone(), twin.clone()];

    let hits = match_templates(&all, &golden_query());
    let ids: Vec<_> = hits.iter().map(|(_, t)| t.template_id.as_str()).collect();
    let mut expected = vec![twin.template_id.as_str(), t.template_id.as_str(), "t-zzz"];
    expected.sort();
    assert_eq!(ids, expected);
    assert_eq!(hits[0].0, 1.0);

    let sourdough = UserQuery::new("q", "bob", "best sourdough recipe", at(0));
    assert!(match_templates(&all, &sourdough).is_empty());
    // 2 shared tokens ("sigir", "2025"), multiset union of 7 + 3 - 2 = 8
    let near = UserQuery::new("q", "bob", "SIGIR 2025 hotels", at(0));
    assert!((match_templates(&all, &near)[0].0 - 2.0 / 8.0).abs() < 1e-12);
}

fn manual(steps: Vec<StepAction>) -> DebugTemplate {
    let (_, mut t) = golden_template();
    t.steps = steps.into_iter().map(|a| TemplateStep { stage: Stage::Decomposition, action: a }).collect();
    t
}

#[test]
fn out_of_range_steps_are_skipped() {
    let t = manual(vec![
        StepAction::RemoveSubQuery { sub_position: 4 },
        StepAction::AdjustStyle { style: AnswerStyle { layout: Layout::Bullets, ..Default::default() } },
    ]);
    let mut s = Session::open(pipeline(), "s1", golden_query()).unwrap();
    let report = apply_template(&t, &mut s, at(0)).unwrap();
    assert_eq!(report.applied, [1]);
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].0, 0);
    assert!(s.state().is_clean());
    s.state().check_invariants().unwrap();

    let none = manual(vec![StepAction::RemoveSubQuery { sub_position: 9 }]);
    assert!(matches!(apply_template(&none, &mut s, at(1)), Err(StoreError::AllStepsUnresolvable(_))));
}

#[test]
fn usage_counters_and_purchases() {
    let (_, t) = golden_template();
    let id = t.template_id.clone();
    let mut store = Store::in_memory();
    store.publish(t).unwrap();
    store.record_usage(&id, UsageKind::Download, "bob", at(0)).unwrap();
    assert_eq!(store.get(&id).unwrap().metrics.downloads, 1);
    assert_eq!(store.ledger().len(), 1);

    assert!(matches!(
        store.record_usage(&id, UsageKind::Purchase, "bob", at(1)),
        Err(StoreError::InsufficientCredits { .. })
    ));
    assert_eq!(store.ledger().len(), 1);
    store.grant("bob", 10, at(2)).unwrap();
    store.record_usage(&id, UsageKind::Purchase, "bob", at(3)).unwrap();
    assert_eq!(store.balance("bob"), 5);
    assert_eq!(store.balance("alice"), 5);
    assert_eq!(store.balances().values().sum::<i64>() + store.escrow(), INITIAL_ESCROW);
    assert!(matches!(store.record_usage("t-nope", UsageKind::View, "bob", at(4)), Err(StoreError::UnknownTemplate(_))));
}

#[test]
fn resolution_needs_an_applied_step_and_a_like() {
    let (_, t) = golden_template();
    let id = t.template_id.clone();
    let mut store = Store::in_memory();
    store.publish(t.clone()).unwrap();
    let mut s = Session::open(pipeline(), "s1", golden_query()).unwrap();
    let report = apply_template(&t, &mut s, at(0)).unwrap();
    store.note_application(&id, "s1", "bob", &report, at(1)).unwrap();
    assert!(store.note_rating("s1", Rating::Dislike, at(2)).unwrap().is_none());
    assert!(store.note_rating("s1", Rating::Like, at(3)).unwrap().is_some());
    assert!(store.note_rating("s1", Rating::Like, at(4)).unwrap().is_none());
    let m = store.get(&id).unwrap().metrics;
    assert_eq!((m.downloads, m.resolutions), (1, 1));
}

#[test]
fn store_directory_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, t) = golden_template();
    let id = t.template_id.clone();
    {
        let mut store = Store::open(dir.path()).unwrap();
        store.publish(t).unwrap();
        store.grant("bob", 7, at(0)).unwrap();
        store.record_usage(&id, UsageKind::View, "bob", at(1)).unwrap();
        store.record_usage(&id, UsageKind::Purchase, "bob", at(2)).unwrap();
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.ledger().len(), 3);
    let m = store.get(&id).unwrap().metrics;
    assert_eq!((m.views, m.purchases), (1, 1));
    assert_eq!(store.balance("bob"), 2);
    assert!(dir.path().join("balances").is_file());
    assert!(dir.path().join("templates").join(&id).is_file());
}

#[test]
fn random_ledger_histories_conserve_credits() {
    let (_, t) = golden_template();
    let mut store = Store::in_memory();
    let ids: Vec<String> = (0..3)
        .map(|i| {
            let mut t = t.clone();
            t.template_id = format!("t-{i}");
            t.author_id = format!("author{i}");
            t.price_credits = i * 4;
            store.publish(t).unwrap();
            format!("t-{i}")
        })
        .collect();
    let users = ["bob", "carol", "author0", "author1"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..1000 {
        let user = users[rng.gen_range(0..users.len())];
        let id = &ids[rng.gen_range(0..ids.len())];
        let kind = [UsageKind::View, UsageKind::Download, UsageKind::Resolution, UsageKind::Purchase, UsageKind::Grant]
            [rng.gen_range(0..5)];
        let before = store.get(id).unwrap().metrics;
        let ok = if kind == UsageKind::Grant {
            store.grant(user, rng.gen_range(0..6), at(i % 60)).is_ok()
        } else {
            store.record_usage(id, kind, user, at(i % 60)).is_ok()
        };
        if ok && kind != UsageKind::Grant {
            *counts.entry((id.clone(), kind)).or_insert(0u64) += 1;
        }
        let after = store.get(id).unwrap().metrics;
        assert!(after.views >= before.views && after.purchases >= before.purchases);
        assert_eq!(store.balances().values().sum::<i64>() + store.escrow(), INITIAL_ESCROW);
        assert!(store.balances().values().all(|b| *b >= 0));
    }
    for id in &ids {
        let m = store.get(id).unwrap().metrics;
        let c = |k| counts.get(&(id.clone(), k)).copied().unwrap_or(0);
        assert_eq!(
            (m.views, m.downloads, m.resolutions, m.purchases),
            (c(UsageKind::View), c(UsageKind::Download), c(UsageKind::Resolution), c(UsageKind::Purchase))
        );
    }
}
