use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DebugTemplate, Metrics, QueryPattern, StepAction, StoreError, TemplateStep};
use crate::domain::{Action, Actor, FeedbackEvent, Rating, Stage, Timestamp, UserQuery};
use crate::pipeline::{fill_slots, RuleDecomposer};
use crate::session::{LogRecord, LogView, Session, SessionError, StageView};
use crate::text::tokenize;

/// Minimum similarity for a template to match a query.
pub const MATCH_THRESHOLD: f64 = 0.25;

fn pattern_for(query: &str) -> QueryPattern {
    let mut tokens = tokenize(query);
    tokens.sort();
    let m = RuleDecomposer::new().match_query(query);
    QueryPattern {
        tokens,
        rule_id: m.as_ref().map(|m| m.rule_id.clone()),
        slots: m.map(|m| m.slots).unwrap_or_default(),
    }
}

/// Replaces slot values in `text` with `{name}` placeholders, longest value
/// first.
fn abstract_slots(text: &str, slots: &BTreeMap<String, String>) -> String {
    let mut pairs: Vec<(&String, &String)> = slots.iter().filter(|(_, v)| !v.is_empty()).collect();
    pairs.sort_by_key(|(_, v)| std::cmp::Reverse(v.len()));
    pairs.iter().fold(text.to_string(), |t, (k, v)| t.replace(v.as_str(), &format!("{{{k}}}")))
}

fn unresolvable(e: &FeedbackEvent, reason: impl Into<String>) -> StoreError {
    StoreError::UnresolvableReference { event_id: e.event_id.clone(), reason: reason.into() }
}

fn abstract_action(
    e: &FeedbackEvent,
    at: &StageView<'_>,
    slots: &BTreeMap<String, String>,
) -> Result<StepAction, StoreError> {
    let sub_pos =
        |sub_id: &str| at.plan.index_of(sub_id).ok_or_else(|| unresolvable(e, format!("no sub-query {sub_id}")));
    let rank = |sub_id: &str, chunk_id: &str| {
        at.evidence
            .list(sub_id)
            .and_then(|l| l.rank_of(chunk_id))
            .ok_or_else(|| unresolvable(e, format!("{chunk_id} is not ranked for {sub_id}")))
    };
    let section_pos = |section_id: &str| {
        at.answer
            .sections
            .iter()
            .position(|s| s.section_id == section_id)
            .ok_or_else(|| unresolvable(e, format!("no section {section_id}")))
    };
    Ok(match &e.action {
        Action::AddSubQuery { text, insert_position, constraints } => StepAction::AddSubQuery {
            text: abstract_slots(text, slots),
            insert_position: *insert_position,
            constraints: constraints.clone(),
        },
        Action::RemoveSubQuery { sub_id } => StepAction::RemoveSubQuery { sub_position: sub_pos(sub_id)? },
        Action::ReorderSubQueries { permutation } => {
            StepAction::ReorderSubQueries { order: permutation.iter().map(|id| sub_pos(id)).collect::<Result<_, _>>()? }
        }
        Action::RefineConstraint { sub_id, key, value } => StepAction::RefineConstraint {
            sub_position: sub_pos(sub_id)?,
            key: key.clone(),
            value: abstract_slots(value, slots),
        },
        Action::AnnotateRelevance { sub_id, chunk_id, label } => StepAction::AnnotateRelevance {
            sub_position: sub_pos(sub_id)?,
            chunk_rank: rank(sub_id, chunk_id)?,
            label: *label,
        },
        Action::RerankEvidence { sub_id, chunk_id, new_rank } => StepAction::RerankEvidence {
            sub_position: sub_pos(sub_id)?,
            chunk_rank: rank(sub_id, chunk_id)?,
            new_rank: *new_rank,
        },
        Action::SetFilter { filter } => StepAction::SetFilter { filter: filter.clone() },
        Action::CorrectFact { section_id, note } => {
            StepAction::CorrectFact { section_position: section_pos(section_id)?, note: abstract_slots(note, slots) }
        }
        Action::EditSection { section_id, new_text } => StepAction::EditSection {
            section_position: section_pos(section_id)?,
            new_text: abstract_slots(new_text, slots),
        },
        Action::AdjustStyle { style } => StepAction::AdjustStyle { style: *style },
        Action::Rate { .. } => return Err(unresolvable(e, "ratings are not template steps")),
    })
}

/// Turns a positional step back into a concrete action for `at`.
fn resolve(step: &StepAction, at: &StageView<'_>, slots: &BTreeMap<String, String>) -> Result<Action, String> {
    let sub_id = |pos: usize| {
        at.plan.sub_queries.get(pos).map(|q| q.sub_id.clone()).ok_or_else(|| format!("no sub-query at position {pos}"))
    };
    let chunk_id = |pos: usize, rank: usize| {
        let sub = sub_id(pos)?;
        at.evidence
            .list(&sub)
            .and_then(|l| l.entries.iter().find(|e| e.rank == rank))
            .map(|e| (sub.clone(), e.chunk_id.clone()))
            .ok_or_else(|| format!("no chunk ranked {rank} for sub-query at position {pos}"))
    };
    let section_id = |pos: usize| {
        at.answer.sections.get(pos).map(|s| s.section_id.clone()).ok_or_else(|| format!("no section at position {pos}"))
    };
    Ok(match step {
        StepAction::AddSubQuery { text, insert_position, constraints } => Action::AddSubQuery {
            text: fill_slots(text, slots),
            insert_position: *insert_position,
            constraints: constraints.clone(),
        },
        StepAction::RemoveSubQuery { sub_position } => Action::RemoveSubQuery { sub_id: sub_id(*sub_position)? },
        StepAction::ReorderSubQueries { order } => {
            Action::ReorderSubQueries { permutation: order.iter().map(|p| sub_id(*p)).collect::<Result<_, _>>()? }
        }
        StepAction::RefineConstraint { sub_position, key, value } => Action::RefineConstraint {
            sub_id: sub_id(*sub_position)?,
            key: key.clone(),
            value: fill_slots(value, slots),
        },
        StepAction::AnnotateRelevance { sub_position, chunk_rank, label } => {
            let (sub_id, chunk_id) = chunk_id(*sub_position, *chunk_rank)?;
            Action::AnnotateRelevance { sub_id, chunk_id, label: *label }
        }
        StepAction::RerankEvidence { sub_position, chunk_rank, new_rank } => {
            let (sub_id, chunk_id) = chunk_id(*sub_position, *chunk_rank)?;
            Action::RerankEvidence { sub_id, chunk_id, new_rank: *new_rank }
        }
        StepAction::SetFilter { filter } => Action::SetFilter { filter: filter.clone() },
        StepAction::CorrectFact { section_position, note } => {
            Action::CorrectFact { section_id: section_id(*section_position)?, note: fill_slots(note, slots) }
        }
        StepAction::EditSection { section_position, new_text } => {
            Action::EditSection { section_id: section_id(*section_position)?, new_text: fill_slots(new_text, slots) }
        }
        StepAction::AdjustStyle { style } => Action::AdjustStyle { style: *style },
    })
}

/// Packages a session's feedback into a positional template.
///
/// The session must be accepted by its author (a `Rate(like)` in the log)
/// unless `publish` is set. Ratings are not steps. Every step is checked to
/// resolve back to its original action against the logged state.
pub fn package_template(
    records: &[LogRecord],
    title: &str,
    price_credits: u64,
    publish: bool,
    created_at: Timestamp,
) -> Result<DebugTemplate, StoreError> {
    let view = LogView::new(records).map_err(StoreError::Session)?;
    let liked = view.steps.iter().any(|s| matches!(s.event.action, Action::Rate { rating: Rating::Like, .. }));
    if !liked && !publish {
        return Err(StoreError::Unpublishable("the author never rated the answer as liked".into()));
    }
    let pattern = pattern_for(&view.query.text);
    let mut steps = Vec::new();
    for step in view.steps.iter().filter(|s| s.event.stage != Stage::Final) {
        let action = abstract_action(step.event, &step.before, &pattern.slots)?;
        if resolve(&action, &step.before, &pattern.slots).as_ref() != Ok(&step.event.action) {
            return Err(unresolvable(step.event, "positional step does not resolve back to the original action"));
        }
        steps.push(TemplateStep { stage: step.event.stage, action });
    }
    if steps.is_empty() {
        return Err(StoreError::Unpublishable("no debug events to reuse".into()));
    }
    let mut h = Sha256::new();
    h.update(view.session_id.as_bytes());
    h.update(view.user_id().as_bytes());
    h.update(serde_json::to_vec(&steps).expect("steps serialize"));
    Ok(DebugTemplate {
        template_id: format!("t-{}", hex::encode(&h.finalize()[..6])),
        author_id: view.user_id().to_string(),
        title: title.to_string(),
        query_pattern: pattern,
        steps,
        price_credits,
        metrics: Metrics::default(),
        created_at,
        source_session: view.session_id.to_string(),
    })
}

/// Multiset Jaccard similarity of two token lists.
fn similarity(a: &[String], b: &[String]) -> f64 {
    fn count(v: &[String]) -> BTreeMap<&str, usize> {
        let mut m: BTreeMap<&str, usize> = BTreeMap::new();
        v.iter().for_each(|t| *m.entry(t.as_str()).or_default() += 1);
        m
    }
    let (ca, cb) = (count(a), count(b));
    let inter: usize = ca.iter().map(|(t, n)| (*n).min(cb.get(t).copied().unwrap_or(0))).sum();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Templates scoring at least [`MATCH_THRESHOLD`] against `query`, best
/// first, ties by template id.
pub fn match_templates<'a>(
    templates: impl IntoIterator<Item = &'a DebugTemplate>,
    query: &UserQuery,
) -> Vec<(f64, &'a DebugTemplate)> {
    let tokens = tokenize(&query.text);
    let mut out: Vec<(f64, &DebugTemplate)> = templates
        .into_iter()
        .map(|t| (similarity(&t.query_pattern.tokens, &tokens), t))
        .filter(|(s, _)| *s >= MATCH_THRESHOLD)
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.template_id.cmp(&b.1.template_id)));
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReport {
    /// Indices of steps submitted successfully.
    pub applied: Vec<usize>,
    /// Skipped step indices with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Replays a template on `session`, resolving positions against the live
/// state before each step. Steps that cannot be resolved or are rejected by
/// validation are skipped; other session errors abort.
pub fn apply_template(
    template: &DebugTemplate,
    session: &mut Session,
    at: Timestamp,
) -> Result<ApplyReport, StoreError> {
    let query = session.state().query.text.clone();
    let live = pattern_for(&query);
    let mut slots = template.query_pattern.slots.clone();
    if live.rule_id.is_some() && live.rule_id == template.query_pattern.rule_id {
        slots.extend(live.slots);
    }
    let mut report = ApplyReport::default();
    for (i, step) in template.steps.iter().enumerate() {
        let state = session.state();
        let view = StageView { plan: &state.plan, evidence: &state.evidence, answer: &state.answer };
        let action = match resolve(&step.action, &view, &slots) {
            Ok(a) => a,
            Err(reason) => {
                report.skipped.push((i, reason));
                continue;
            }
        };
        let event = FeedbackEvent::new(session.id(), session.next_seq(), Actor::TemplateReplay, at, action);
        match session.submit(event) {
            Ok(_) => report.applied.push(i),
            Err(SessionError::Rejected(r)) => report.skipped.push((i, r.to_string())),
            Err(e) => return Err(e.into()),
        }
    }
    if report.applied.is_empty() {
        return Err(StoreError::AllStepsUnresolvable(report));
    }
    Ok(report)
}
