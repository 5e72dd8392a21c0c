use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::*;
use crate::domain::{Action, FeedbackEvent, QueryPlan, Rating, RelevanceLabel, Stage};
use crate::session::{EventStep, LogView, StageView};
use crate::text::normalized_edit_distance;

/// Edits at or below this normalized distance count as accepted.
pub const MINIMAL_EDIT: f64 = 0.1;

struct Scan<'a> {
    view: LogView<'a>,
    /// Steps whose event falls inside the window.
    steps: Vec<EventStep<'a>>,
    /// Outputs after the last event before the window end.
    end: StageView<'a>,
}

impl<'a> Scan<'a> {
    fn new(view: LogView<'a>, window: &Window) -> Option<Self> {
        let steps: Vec<EventStep<'a>> =
            view.steps.iter().filter(|s| window.contains(s.event.occurred_at)).copied().collect();
        if steps.is_empty() && !window.contains(view.query.submitted_at) {
            return None;
        }
        let end = view.steps.iter().rfind(|s| s.event.occurred_at < window.to).map(|s| s.after).unwrap_or(view.initial);
        Some(Scan { view, steps, end })
    }

    fn session(&self) -> String {
        self.view.session_id.to_string()
    }

    fn stage(&self, stage: Stage) -> impl Iterator<Item = &EventStep<'a>> {
        self.steps.iter().filter(move |s| s.event.stage == stage)
    }
}

fn mix<'e>(events: impl IntoIterator<Item = &'e FeedbackEvent>) -> (Vec<String>, ActorMix) {
    let mut ids = Vec::new();
    let mut actors = ActorMix::new();
    for e in events {
        if !ids.contains(&e.event_id) {
            ids.push(e.event_id.clone());
            *actors.entry(e.actor).or_default() += 1;
        }
    }
    (ids, actors)
}

fn sidecar(
    session_id: String,
    kind: SidecarKind,
    section: Option<&str>,
    text: Option<&str>,
    events: &[&FeedbackEvent],
) -> SidecarEntry {
    let (source_events, actor_mix) = mix(events.iter().copied());
    SidecarEntry {
        session_id,
        kind,
        section_id: section.map(str::to_string),
        text: text.map(str::to_string),
        source_events,
        actor_mix,
    }
}

/// Compiles every readable log into one batch. Logs that fail to parse or
/// walk are listed in `skipped_logs` and otherwise ignored.
pub fn compile(logs: &[LogInput], window: &Window) -> Batch {
    let mut batch = Batch::default();
    let mut ordered: Vec<&LogInput> = logs.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, parsed) in ordered {
        let records = match parsed {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(log = %name, error = %e, "skipping unreadable log");
                batch.skipped_logs.push(name.clone());
                continue;
            }
        };
        let view = match LogView::new(records) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(log = %name, error = %e, "skipping corrupt log");
                batch.skipped_logs.push(name.clone());
                continue;
            }
        };
        let Some(scan) = Scan::new(view, window) else { continue };
        decomposition(&scan, &mut batch);
        retrieval(&scan, &mut batch);
        generation(&scan, &mut batch);
        final_ratings(&scan, &mut batch);
    }
    batch
}

fn decomposition(scan: &Scan<'_>, batch: &mut Batch) {
    let steps: Vec<&EventStep<'_>> = scan.stage(Stage::Decomposition).collect();
    let (Some(first), Some(last)) = (steps.first(), steps.last()) else { return };
    let events: Vec<&FeedbackEvent> = steps.iter().map(|s| s.event).collect();
    let negative = plan_entries(first.before.plan);
    let positive = plan_entries(last.after.plan);
    if negative == positive {
        batch.accepted.push(sidecar(scan.session(), SidecarKind::DecompositionNoNetChange, None, None, &events));
        return;
    }
    let (source_events, actor_mix) = mix(events);
    batch.decomposition.push(DecompositionPair {
        session_id: scan.session(),
        query: scan.view.query.text.clone(),
        negative_plan: negative,
        positive_plan: positive,
        edit_count: steps.len(),
        source_events,
        actor_mix,
    });
}

/// Sub-query texts, each followed by its constraints as ` [key=value]`.
fn plan_entries(plan: &QueryPlan) -> Vec<String> {
    plan.sub_queries
        .iter()
        .map(|q| q.constraints.iter().fold(q.text.clone(), |t, c| format!("{t} [{}={}]", c.key, c.value)))
        .collect()
}

#[derive(Default)]
struct SubSignals<'a> {
    text: String,
    /// Latest explicit signal per chunk.
    explicit: BTreeMap<String, ChunkNote>,
    implicit: BTreeMap<String, Vec<ChunkNote>>,
    events: Vec<&'a FeedbackEvent>,
}

fn retrieval(scan: &Scan<'_>, batch: &mut Batch) {
    let mut subs: BTreeMap<String, SubSignals<'_>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut touch = |subs: &mut BTreeMap<String, SubSignals<'_>>, sub_id: &str, text: &str| {
        if !order.iter().any(|s| s == sub_id) {
            order.push(sub_id.to_string());
        }
        subs.entry(sub_id.to_string()).or_insert_with(|| SubSignals { text: text.to_string(), ..Default::default() });
    };
    let note = |chunk: &str, polarity, signal, weight, e: Option<&FeedbackEvent>| ChunkNote {
        chunk_id: chunk.to_string(),
        polarity,
        signal,
        weight,
        event_id: e.map(|e| e.event_id.clone()),
    };

    for step in scan.stage(Stage::Retrieval) {
        let e = step.event;
        let text_of = |sub_id: &str| step.before.plan.get(sub_id).map(|q| q.text.clone()).unwrap_or_default();
        match &e.action {
            Action::AnnotateRelevance { sub_id, chunk_id, label } => {
                touch(&mut subs, sub_id, &text_of(sub_id));
                let (polarity, weight) = match label {
                    RelevanceLabel::Relevant => (Polarity::Positive, 1.0),
                    RelevanceLabel::PartiallyRelevant => (Polarity::Positive, 0.5),
                    RelevanceLabel::Irrelevant => (Polarity::Negative, 1.0),
                };
                let s = subs.get_mut(sub_id.as_str()).expect("touched");
                s.explicit.insert(chunk_id.clone(), note(chunk_id, polarity, Signal::Label, weight, Some(e)));
                s.events.push(e);
            }
            Action::RerankEvidence { sub_id, chunk_id, new_rank } => {
                let old = step.before.evidence.list(sub_id).and_then(|l| l.rank_of(chunk_id));
                if old.is_some_and(|old| *new_rank < old) {
                    touch(&mut subs, sub_id, &text_of(sub_id));
                    let s = subs.get_mut(sub_id.as_str()).expect("touched");
                    s.explicit
                        .insert(chunk_id.clone(), note(chunk_id, Polarity::Positive, Signal::Rerank, 1.0, Some(e)));
                    s.events.push(e);
                } else {
                    batch.accepted.push(sidecar(scan.session(), SidecarKind::RetrievalNoSignal, None, None, &[e]));
                }
            }
            Action::SetFilter { .. } => {
                let mut excluded_any = false;
                for q in &step.before.plan.sub_queries {
                    let (Some(before), Some(after)) =
                        (step.before.evidence.list(&q.sub_id), step.after.evidence.list(&q.sub_id))
                    else {
                        continue;
                    };
                    let lost: Vec<String> = before.chunk_ids().into_iter().filter(|c| !after.contains(c)).collect();
                    if lost.is_empty() {
                        continue;
                    }
                    excluded_any = true;
                    touch(&mut subs, &q.sub_id, &q.text);
                    let s = subs.get_mut(q.sub_id.as_str()).expect("touched");
                    for c in lost {
                        s.implicit.entry(c.clone()).or_default().push(note(
                            &c,
                            Polarity::Negative,
                            Signal::FilterExclusion,
                            1.0,
                            Some(e),
                        ));
                    }
                    s.events.push(e);
                }
                if !excluded_any {
                    batch.accepted.push(sidecar(scan.session(), SidecarKind::FilterNoExclusion, None, None, &[e]));
                }
            }
            _ => {}
        }
    }

    for q in &scan.end.plan.sub_queries {
        let Some(section) = scan.end.answer.section_for_sub(&q.sub_id) else { continue };
        if section.citations.is_empty() {
            continue;
        }
        touch(&mut subs, &q.sub_id, &q.text);
        let s = subs.get_mut(q.sub_id.as_str()).expect("touched");
        s.text = q.text.clone();
        for c in &section.citations {
            s.implicit.entry(c.clone()).or_default().push(note(c, Polarity::Positive, Signal::Citation, 1.0, None));
        }
    }

    for sub_id in order {
        let s = subs.remove(&sub_id).expect("ordered");
        let chunks: BTreeSet<&String> = s.explicit.keys().chain(s.implicit.keys()).collect();
        let mut notes = Vec::new();
        for c in chunks {
            // explicit beats implicit; among implicit signals a positive wins
            let chosen = s.explicit.get(c).cloned().or_else(|| {
                let list = &s.implicit[c];
                list.iter().find(|n| n.polarity == Polarity::Positive).or(list.first()).cloned()
            });
            notes.extend(chosen);
        }
        let side =
            |p: Polarity| notes.iter().filter(|n| n.polarity == p).map(|n| n.chunk_id.clone()).collect::<Vec<_>>();
        let (positive_chunks, negative_chunks) = (side(Polarity::Positive), side(Polarity::Negative));
        if positive_chunks.is_empty() && negative_chunks.is_empty() {
            continue;
        }
        let (source_events, actor_mix) = mix(s.events);
        batch.retrieval.push(RetrievalPreference {
            session_id: scan.session(),
            sub_id,
            sub_query: s.text,
            positive_chunks,
            negative_chunks,
            notes,
            source_events,
            actor_mix,
        });
    }
}

fn evidence_digest(view: &StageView<'_>, sub_id: Option<&str>) -> String {
    let ids = sub_id.and_then(|s| view.evidence.list(s)).map(|l| l.chunk_ids()).unwrap_or_default();
    hex::encode(&Sha256::digest(ids.join(",").as_bytes())[..8])
}

fn generation(scan: &Scan<'_>, batch: &mut Batch) {
    let mut groups: Vec<(String, Vec<&EventStep<'_>>)> = Vec::new();
    for step in scan.stage(Stage::Generation) {
        let section = match &step.event.action {
            Action::CorrectFact { section_id, .. } | Action::EditSection { section_id, .. } => section_id,
            Action::AdjustStyle { .. } => {
                batch.accepted.push(sidecar(scan.session(), SidecarKind::StyleAdjustment, None, None, &[step.event]));
                continue;
            }
            _ => continue,
        };
        match groups.iter_mut().find(|(id, _)| id == section) {
            Some((_, steps)) => steps.push(step),
            None => groups.push((section.clone(), vec![step])),
        }
    }

    for (section_id, steps) in groups {
        let events: Vec<&FeedbackEvent> = steps.iter().map(|s| s.event).collect();
        let before = steps[0].before.answer.section(&section_id).expect("validated event targets a live section");
        let rejected = before.text.as_str();
        let Some(after) = scan.end.answer.section(&section_id) else {
            batch.accepted.push(sidecar(
                scan.session(),
                SidecarKind::SectionRemoved,
                Some(&section_id),
                Some(rejected),
                &events,
            ));
            continue;
        };
        let chosen = after.text.as_str();
        let flagged = events.iter().any(|e| matches!(e.action, Action::CorrectFact { .. }));
        let kind = match (flagged, chosen == rejected) {
            (true, true) => Some(SidecarKind::RejectedOnly),
            (false, _) if normalized_edit_distance(rejected, chosen) <= MINIMAL_EDIT => {
                Some(SidecarKind::AcceptedSection)
            }
            _ => None,
        };
        if let Some(kind) = kind {
            let text = if kind == SidecarKind::RejectedOnly { rejected } else { chosen };
            batch.accepted.push(sidecar(scan.session(), kind, Some(&section_id), Some(text), &events));
            continue;
        }
        let (source_events, actor_mix) = mix(events);
        batch.generation.push(GenerationPreference {
            session_id: scan.session(),
            section_id: section_id.clone(),
            query: scan.view.query.text.clone(),
            evidence_digest: evidence_digest(&scan.end, after.sub_id.as_deref()),
            chosen_text: chosen.to_string(),
            rejected_text: rejected.to_string(),
            edit_distance: strsim::levenshtein(rejected, chosen),
            source_events,
            actor_mix,
        });
    }
}

fn final_ratings(scan: &Scan<'_>, batch: &mut Batch) {
    for step in scan.stage(Stage::Final) {
        if let Action::Rate { rating, .. } = &step.event.action {
            let kind = match rating {
                Rating::Like => SidecarKind::AcceptedAnswer,
                Rating::Dislike => SidecarKind::RejectedAnswer,
            };
            let text = step.after.answer.render();
            batch.accepted.push(sidecar(scan.session(), kind, None, Some(&text), &[step.event]));
        }
    }
}

/// Accounting of in-window events against a compiled batch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub events_in_window: usize,
    pub in_samples: usize,
    pub in_sidecar: usize,
    /// Events reflected nowhere.
    pub missing: Vec<String>,
    /// Events reflected both in a sample file and in the sidecar, or in
    /// more than one sample file.
    pub conflicting: Vec<String>,
}

impl Reconciliation {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.conflicting.is_empty()
    }
}

/// Checks that every in-window event of every readable log is reflected in
/// exactly one output: one sample file or the sidecar.
pub fn reconcile(logs: &[LogInput], window: &Window, batch: &Batch) -> Reconciliation {
    let mut homes: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
    let files = batch
        .decomposition
        .iter()
        .map(|s| ("decomposition", &s.session_id, &s.source_events))
        .chain(batch.retrieval.iter().map(|s| ("retrieval", &s.session_id, &s.source_events)))
        .chain(batch.generation.iter().map(|s| ("generation", &s.session_id, &s.source_events)))
        .chain(batch.accepted.iter().map(|s| ("sidecar", &s.session_id, &s.source_events)));
    for (file, session, ids) in files {
        for id in ids {
            homes.entry((session.as_str(), id.as_str())).or_default().insert(file);
        }
    }

    let mut r = Reconciliation::default();
    for (_, parsed) in logs {
        let Ok(records) = parsed else { continue };
        let Ok(view) = LogView::new(records) else { continue };
        for step in view.steps.iter().filter(|s| window.contains(s.event.occurred_at)) {
            r.events_in_window += 1;
            let id = step.event.event_id.as_str();
            match homes.get(&(view.session_id, id)) {
                None => r.missing.push(id.to_string()),
                Some(files) if files.len() > 1 => r.conflicting.push(id.to_string()),
                Some(files) if files.contains("sidecar") => r.in_sidecar += 1,
                Some(_) => r.in_samples += 1,
            }
        }
    }
    r
}
