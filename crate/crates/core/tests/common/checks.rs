//! Property checks shared by the property tests and the acceptance suite.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagewise_core::domain::record::read_corpus;
use stagewise_core::domain::{Action, Actor, Stage, Timestamp, UserQuery, ValidationState};
use stagewise_core::session::{replay, LogRecord, Session};
use stagewise_core::sim::{upstream_of, EventGen};
use stagewise_core::Pipeline;

use super::fixture;

pub const QUERIES: &[&str] = &[
    "Plan a trip to attend SIGIR 2025",
    "Plan a trip to attend ECIR 2026",
    "SIGIR 2025 hotels near the venue",
    "cheap flights to Venice in July",
    "where is SIGIR 2025 held",
];

pub fn corpus_domains() -> Vec<String> {
    let mut d: Vec<String> =
        read_corpus(&fixture("corpus.jsonl")).unwrap().into_iter().map(|c| c.source_domain).collect();
    d.sort();
    d.dedup();
    d
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

/// A fresh session for one of [`QUERIES`], chosen by `seed`.
pub fn open_random(pipeline: &Arc<Pipeline>, seed: u64) -> Session {
    let text = QUERIES[(seed % QUERIES.len() as u64) as usize];
    let at: Timestamp = "2025-03-10T09:00:00.000Z".parse().unwrap();
    let q = UserQuery::new(format!("q{seed}"), "tester", text, at);
    Session::open(pipeline.clone(), &format!("sim-{seed}"), q).unwrap()
}

/// A session driven through 1..=`max_len` random events.
pub fn random_session(pipeline: &Arc<Pipeline>, seed: u64, max_len: usize) -> Session {
    let mut s = open_random(pipeline, seed);
    let mut g = EventGen::new(seed, corpus_domains());
    let n = g.rng().gen_range(1..=max_len);
    g.drive(&mut s, n, true).unwrap();
    s
}

/// Full replay and prefix replay plus live resubmission of the remainder
/// both reproduce the live state byte for byte.
pub fn check_replay(pipeline: &Arc<Pipeline>, session: &Session, cut_seed: u64) -> Result<(), String> {
    let records = session.log().records();
    let live = json(session.state());
    let full = replay(pipeline, records).map_err(|e| e.to_string())?;
    if json(&full) != live {
        return Err(format!("{}: full replay differs from live state", session.id()));
    }
    let boundaries: Vec<usize> =
        (1..=records.len()).filter(|i| *i == 1 || matches!(records[i - 1], LogRecord::Outcome { .. })).collect();
    let cut = boundaries[ChaCha8Rng::seed_from_u64(cut_seed).gen_range(0..boundaries.len())];
    let mut resumed = Session::replay(pipeline.clone(), records[..cut].to_vec()).map_err(|e| e.to_string())?;
    for rec in &records[cut..] {
        if let LogRecord::FeedbackEvent(e) = rec {
            resumed.submit(e.clone()).map_err(|e| e.to_string())?;
        }
    }
    if json(resumed.state()) != live {
        return Err(format!("{}: prefix of {cut} records plus resubmission differs", session.id()));
    }
    Ok(())
}

/// Drives `n` random events through a fresh session and checks each
/// submission: upstream stages untouched, invalidated stages re-run and
/// clean, corrected sections kept verbatim across style changes. Returns the
/// number of events checked.
pub fn check_propagation(pipeline: &Arc<Pipeline>, seed: u64, n: usize) -> Result<usize, String> {
    let mut s = open_random(pipeline, seed);
    let mut g = EventGen::new(seed ^ 0x5eed, corpus_domains());
    for i in 0..n {
        // Style changes are what corrected sections must survive; force some.
        let event = if i % 5 == 4 {
            let mut e = g.event(s.state(), Actor::Human, false);
            e.action = Action::AdjustStyle { style: g.style() };
            e.stage = Stage::Generation;
            e
        } else {
            g.event(s.state(), Actor::Human, i % 11 == 10)
        };
        let before = s.state().clone();
        let report = s.submit(event.clone()).map_err(|e| format!("seed {seed} step {i}: {e}"))?;
        let after = s.state();
        for stage in upstream_of(event.stage) {
            if json(&before.stage_json(*stage)) != json(&after.stage_json(*stage)) {
                return Err(format!("seed {seed} step {i}: {} changed {stage}", event.action.kind()));
            }
        }
        for stage in &report.invalidation.stages_to_rerun {
            if !report.reran.contains(stage) {
                return Err(format!("seed {seed} step {i}: {stage} invalidated but not re-run"));
            }
        }
        if !after.is_clean() {
            return Err(format!("seed {seed} step {i}: stages left dirty {:?}", after.stage_status));
        }
        if matches!(event.action, Action::AdjustStyle { .. }) {
            for sec in before.answer.sections.iter().filter(|s| s.validation_state == ValidationState::UserCorrected) {
                match after.answer.section(&sec.section_id) {
                    Some(now) if now.text == sec.text => {}
                    _ => return Err(format!("seed {seed} step {i}: corrected {} lost its text", sec.section_id)),
                }
            }
        }
        after.check_invariants().map_err(|e| format!("seed {seed} step {i}: {e}"))?;
    }
    Ok(n)
}
