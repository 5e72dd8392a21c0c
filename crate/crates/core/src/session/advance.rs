//! The pure state transition shared by live submission and replay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::state::{cache_key, SessionState, StageStatus};
use crate::domain::{AnswerSection, EvidenceSet, FeedbackEvent, RankedList, Stage, UserQuery};
use crate::feedback::{
    apply_decomposition_feedback, apply_generation_feedback, apply_retrieval_feedback, invalidation_set,
    InvalidationSet,
};
use crate::par;
use crate::pipeline::{Pipeline, PipelineError, RegenScope};

/// What one submission (or retry) recomputed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReport {
    pub seq: u64,
    pub invalidation: InvalidationSet,
    pub reran: Vec<Stage>,
    /// Sub-queries whose raw results came from the retrieval cache.
    pub cache_hits: Vec<String>,
    pub cache_misses: Vec<String>,
    pub regenerated_sections: Vec<String>,
    pub stage_status: BTreeMap<Stage, StageStatus>,
}

/// Runs the pipeline for a new session. Any stage failure aborts.
pub fn bootstrap(pipeline: &Pipeline, session_id: &str, query: &UserQuery) -> Result<SessionState, PipelineError> {
    let (plan, evidence, answer) = pipeline.run(query)?;
    Ok(super::from_bootstrap(session_id, query, &plan, &evidence, &answer))
}

/// Applies a validated event and re-executes what it invalidated. Never
/// fails: backend errors leave the failing stage marked `error`.
pub fn advance(pipeline: &Pipeline, state: &SessionState, event: &FeedbackEvent) -> (SessionState, SubmitReport) {
    let mut next = state.clone();
    next.log_offset = event.seq;
    let invalidation = invalidation_set(event);
    let mut scope = RegenScope::All;

    match event.stage {
        Stage::Decomposition => {
            next.plan = apply_decomposition_feedback(&state.plan, &event.action, event.actor);
        }
        Stage::Retrieval => {
            next.evidence = apply_retrieval_feedback(&state.evidence, &event.action);
            if let Some(sub) = event_sub(event) {
                scope = RegenScope::Sections(vec![AnswerSection::section_id_for(sub)]);
            }
        }
        Stage::Generation => {
            let (answer, inv) = apply_generation_feedback(&state.answer, &event.action);
            next.answer = answer;
            if let Some(ids) = inv.sections_to_regenerate {
                scope = RegenScope::Sections(ids);
            }
        }
        Stage::Final => {}
    }
    for stage in &invalidation.stages_to_rerun {
        next.stage_status.insert(*stage, StageStatus::Dirty);
    }
    let mut report = rerun_dirty(pipeline, &mut next, scope);
    report.seq = event.seq;
    report.invalidation = invalidation;
    (next, report)
}

fn event_sub(event: &FeedbackEvent) -> Option<&str> {
    use crate::domain::Action::*;
    match &event.action {
        AnnotateRelevance { sub_id, .. } | RerankEvidence { sub_id, .. } => Some(sub_id),
        _ => None,
    }
}

/// Re-executes every non-clean stage in pipeline order. `scope` applies to
/// generation when retrieval did not change the evidence layout.
pub fn rerun_dirty(pipeline: &Pipeline, state: &mut SessionState, mut scope: RegenScope) -> SubmitReport {
    let mut report = SubmitReport { seq: state.log_offset, ..Default::default() };

    if state.status(Stage::Retrieval) != StageStatus::Clean {
        report.reran.push(Stage::Retrieval);
        let old = state.evidence.clone();
        state.evidence = reretrieve(pipeline, state, &mut report);
        let changed: Vec<String> = state
            .plan
            .sub_queries
            .iter()
            .filter(|s| old.list(&s.sub_id) != state.evidence.list(&s.sub_id))
            .map(|s| AnswerSection::section_id_for(&s.sub_id))
            .collect();
        if state.status(Stage::Generation) != StageStatus::Error {
            scope = RegenScope::Sections(changed);
        }
        state.stage_status.insert(Stage::Retrieval, StageStatus::Clean);
        state.stage_status.insert(Stage::Generation, StageStatus::Dirty);
    }

    if state.status(Stage::Generation) != StageStatus::Clean {
        if state.status(Stage::Generation) == StageStatus::Error {
            scope = RegenScope::All;
        }
        report.reran.push(Stage::Generation);
        match pipeline.regenerate(
            &state.query,
            &state.plan,
            &state.evidence,
            state.answer.style,
            Some(&state.answer),
            &scope,
        ) {
            Ok((answer, regenerated)) => {
                state.answer = answer;
                report.regenerated_sections = regenerated;
                state.stage_status.insert(Stage::Generation, StageStatus::Clean);
            }
            Err(e) => {
                tracing::warn!(session = %state.session_id, error = %e, "generation failed; stage marked error");
                state.stage_status.insert(Stage::Generation, StageStatus::Error);
            }
        }
    }
    report.stage_status = state.stage_status.clone();
    report
}

/// Rebuilds the evidence lists for the current plan, serving unchanged
/// (sub-query, filter) pairs from the cache.
fn reretrieve(pipeline: &Pipeline, state: &mut SessionState, report: &mut SubmitReport) -> EvidenceSet {
    let filter = state.evidence.active_filter.clone();
    let ffp = filter.fingerprint();
    let keys: Vec<String> = state.plan.sub_queries.iter().map(|s| cache_key(s, &ffp)).collect();

    let misses: Vec<usize> = (0..keys.len()).filter(|i| !state.retrieval_cache.contains_key(&keys[*i])).collect();
    let fresh: Vec<RankedList> =
        par::map_ordered(pipeline.exec_mode(), &misses, |i| pipeline.retrieve(&state.plan.sub_queries[*i], &filter));
    for (i, list) in misses.iter().zip(fresh) {
        state.retrieval_cache.insert(keys[*i].clone(), list);
    }

    let mut next = EvidenceSet { active_filter: filter, ..Default::default() };
    for (i, sub) in state.plan.sub_queries.iter().enumerate() {
        if misses.contains(&i) {
            report.cache_misses.push(sub.sub_id.clone());
        } else {
            report.cache_hits.push(sub.sub_id.clone());
        }
        let overlay = state.evidence.overlay(&sub.sub_id);
        let raw = &state.retrieval_cache[&keys[i]];
        next.per_subquery.insert(sub.sub_id.clone(), raw.materialize(&overlay));
        if !overlay.is_empty() {
            next.overlays.insert(sub.sub_id.clone(), overlay);
        }
    }
    next
}
