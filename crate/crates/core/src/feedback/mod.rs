//! Pure application of feedback actions to stage artifacts, and the
//! downstream invalidation each event implies.
//!
//! Every function here assumes the action already passed
//! [`validate_event`](crate::domain::validate_event); actions of a different
//! stage are returned unchanged.

use serde::{Deserialize, Serialize};

use crate::domain::{
    Action, Actor, Answer, Constraint, EvidenceSet, FeedbackEvent, Provenance, QueryPlan, Stage, SubQuery,
    ValidationState,
};

/// What has to be recomputed after an event.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidationSet {
    /// Ordered subset of retrieval and generation.
    pub stages_to_rerun: Vec<Stage>,
    /// Partial generation invalidation; `None` with generation present
    /// means every section that is not user-validated or user-corrected.
    pub sections_to_regenerate: Option<Vec<String>>,
}

impl InvalidationSet {
    pub fn empty() -> Self {
        Self::default()
    }

    fn downstream_of(stage: Stage) -> Self {
        let stages_to_rerun = match stage {
            Stage::Decomposition => vec![Stage::Retrieval, Stage::Generation],
            Stage::Retrieval => vec![Stage::Generation],
            Stage::Generation => vec![Stage::Generation],
            Stage::Final => vec![],
        };
        InvalidationSet { stages_to_rerun, sections_to_regenerate: None }
    }

    fn sections(ids: Vec<String>) -> Self {
        InvalidationSet { stages_to_rerun: vec![Stage::Generation], sections_to_regenerate: Some(ids) }
    }

    pub fn is_empty(&self) -> bool {
        self.stages_to_rerun.is_empty()
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.stages_to_rerun.contains(&stage)
    }
}

/// Provenance recorded on sub-queries added by `actor`. Template replays
/// re-enact a human trace and keep its provenance.
pub fn provenance_for(actor: Actor) -> Provenance {
    match actor {
        Actor::ShadowAgent => Provenance::AgentSuggested,
        Actor::Human | Actor::TemplateReplay => Provenance::UserAdded,
    }
}

/// Applies a decomposition action, producing the next plan version.
pub fn apply_decomposition_feedback(plan: &QueryPlan, action: &Action, actor: Actor) -> QueryPlan {
    let mut next = plan.clone();
    match action {
        Action::AddSubQuery { text, insert_position, constraints } => {
            let sub = SubQuery {
                sub_id: format!("Q{}", next.next_sub_number),
                text: text.trim().to_string(),
                constraints: constraints.clone(),
                position: *insert_position,
                provenance: provenance_for(actor),
            };
            next.next_sub_number += 1;
            let at = (*insert_position).min(next.sub_queries.len());
            next.sub_queries.insert(at, sub);
        }
        Action::RemoveSubQuery { sub_id } => next.sub_queries.retain(|s| &s.sub_id != sub_id),
        Action::ReorderSubQueries { permutation } => {
            let mut old = std::mem::take(&mut next.sub_queries);
            for id in permutation {
                if let Some(i) = old.iter().position(|s| &s.sub_id == id) {
                    next.sub_queries.push(old.remove(i));
                }
            }
            next.sub_queries.append(&mut old);
        }
        Action::RefineConstraint { sub_id, key, value } => {
            if let Some(s) = next.sub_queries.iter_mut().find(|s| &s.sub_id == sub_id) {
                match s.constraints.iter_mut().find(|c| &c.key == key) {
                    Some(c) => c.value = value.clone(),
                    None => s.constraints.push(Constraint::new(key.clone(), value.clone())),
                }
            }
        }
        _ => return next,
    }
    next.renumber();
    next.parent_version = Some(plan.plan_version);
    next.plan_version = plan.plan_version + 1;
    next
}

/// Applies a retrieval action. Labels and pins go to the sub-query overlay
/// and the list is re-materialized; irrelevant chunks leave the list but
/// keep their label. `SetFilter` only records the filter and marks every
/// list stale; re-retrieval is the caller's job.
pub fn apply_retrieval_feedback(evidence: &EvidenceSet, action: &Action) -> EvidenceSet {
    let mut next = evidence.clone();
    let sub_id = match action {
        Action::AnnotateRelevance { sub_id, chunk_id, label } => {
            next.overlays.entry(sub_id.clone()).or_default().set_label(chunk_id, *label);
            sub_id
        }
        Action::RerankEvidence { sub_id, chunk_id, new_rank } => {
            next.overlays.entry(sub_id.clone()).or_default().set_pin(chunk_id, *new_rank);
            sub_id
        }
        Action::SetFilter { filter } => {
            next.active_filter = filter.normalized();
            next.stale = next.per_subquery.keys().cloned().collect();
            return next;
        }
        _ => return next,
    };
    let overlay = next.overlay(sub_id);
    if let Some(list) = next.per_subquery.get_mut(sub_id) {
        *list = list.materialize(&overlay);
    }
    next
}

/// Applies a generation action and reports which sections to rebuild.
pub fn apply_generation_feedback(answer: &Answer, action: &Action) -> (Answer, InvalidationSet) {
    let mut next = answer.clone();
    match action {
        Action::CorrectFact { section_id, note } => {
            if let Some(s) = next.sections.iter_mut().find(|s| &s.section_id == section_id) {
                s.validation_state = ValidationState::Flagged;
                s.note = Some(note.clone());
                for c in &s.citations {
                    if !s.rejected_citations.contains(c) {
                        s.rejected_citations.push(c.clone());
                    }
                }
            }
            (next, InvalidationSet::sections(vec![section_id.clone()]))
        }
        Action::EditSection { section_id, new_text } => {
            if let Some(s) = next.sections.iter_mut().find(|s| &s.section_id == section_id) {
                s.validation_state =
                    if &s.text == new_text { ValidationState::UserValidated } else { ValidationState::UserCorrected };
                s.text = new_text.clone();
            }
            (next, InvalidationSet::empty())
        }
        Action::AdjustStyle { style } => {
            next.style = *style;
            let ids = next
                .sections
                .iter()
                .filter(|s| !s.validation_state.is_preserved())
                .map(|s| s.section_id.clone())
                .collect();
            (next, InvalidationSet::sections(ids))
        }
        _ => (next, InvalidationSet::empty()),
    }
}

/// Downstream invalidation implied by an event on its own.
pub fn invalidation_set(event: &FeedbackEvent) -> InvalidationSet {
    match &event.action {
        Action::SetFilter { .. } => {
            InvalidationSet { stages_to_rerun: vec![Stage::Retrieval, Stage::Generation], sections_to_regenerate: None }
        }
        Action::CorrectFact { section_id, .. } => InvalidationSet::sections(vec![section_id.clone()]),
        Action::EditSection { .. } => InvalidationSet::empty(),
        other => InvalidationSet::downstream_of(other.stage()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AnswerSection, RankedList, RelevanceLabel, RetrievalFilter, Timestamp};

    fn sigir_plan() -> QueryPlan {
        QueryPlan::initial(["flights", "venue", "hotels", "sightseeing"])
    }

    #[test]
    fn remove_add_reorder() {
        let p1 =
            apply_decomposition_feedback(&sigir_plan(), &Action::RemoveSubQuery { sub_id: "Q4".into() }, Actor::Human);
        assert_eq!(p1.sub_ids(), ["Q1", "Q2", "Q3"]);
        assert_eq!((p1.plan_version, p1.parent_version), (2, Some(1)));
        let add = Action::AddSubQuery { text: "registration".into(), insert_position: 3, constraints: vec![] };
        let p2 = apply_decomposition_feedback(&p1, &add, Actor::Human);
        assert_eq!(p2.sub_ids(), ["Q1", "Q2", "Q3", "Q5"]);
        assert_eq!(p2.get("Q5").unwrap().provenance, Provenance::UserAdded);
        let perm = Action::ReorderSubQueries { permutation: vec!["Q2".into(), "Q1".into(), "Q3".into(), "Q5".into()] };
        let p3 = apply_decomposition_feedback(&p2, &perm, Actor::Human);
        assert_eq!(p3.sub_ids(), ["Q2", "Q1", "Q3", "Q5"]);
        assert_eq!(p3.plan_version, 4);
        p3.check_invariants().unwrap();
    }

    #[test]
    fn identity_permutation_still_bumps_version() {
        let p = sigir_plan();
        let p2 =
            apply_decomposition_feedback(&p, &Action::ReorderSubQueries { permutation: p.sub_ids() }, Actor::Human);
        assert_eq!(p2.sub_ids(), p.sub_ids());
        assert_eq!(p2.plan_version, 2);
    }

    #[test]
    fn refine_upserts_constraint() {
        let a = Action::RefineConstraint { sub_id: "Q3".into(), key: "budget_eur_max".into(), value: "150".into() };
        let p = apply_decomposition_feedback(&sigir_plan(), &a, Actor::Human);
        let a2 = Action::RefineConstraint { sub_id: "Q3".into(), key: "budget_eur_max".into(), value: "120".into() };
        let p = apply_decomposition_feedback(&p, &a2, Actor::Human);
        assert_eq!(p.get("Q3").unwrap().constraints, [Constraint::new("budget_eur_max", "120")]);
    }

    #[test]
    fn agent_add_is_agent_suggested() {
        let add = Action::AddSubQuery { text: "x".into(), insert_position: 0, constraints: vec![] };
        let p = apply_decomposition_feedback(&sigir_plan(), &add, Actor::ShadowAgent);
        assert_eq!(p.sub_queries[0].provenance, Provenance::AgentSuggested);
    }

    fn evidence() -> EvidenceSet {
        let list = RankedList::from_scored(vec![("D1".into(), 6.5), ("D2".into(), 4.8), ("D3".into(), 4.1)]);
        let mut ev = EvidenceSet::default();
        ev.per_subquery.insert("Q2".into(), list);
        ev
    }

    #[test]
    fn irrelevant_removes_but_keeps_label() {
        let a =
            Action::AnnotateRelevance { sub_id: "Q2".into(), chunk_id: "D3".into(), label: RelevanceLabel::Irrelevant };
        let ev = apply_retrieval_feedback(&evidence(), &a);
        assert_eq!(ev.list("Q2").unwrap().chunk_ids(), ["D1", "D2"]);
        assert_eq!(ev.overlay("Q2").labels.get("D3"), Some(&RelevanceLabel::Irrelevant));
    }

    #[test]
    fn rerank_pins_and_reflows() {
        let a = Action::RerankEvidence { sub_id: "Q2".into(), chunk_id: "D2".into(), new_rank: 1 };
        let ev = apply_retrieval_feedback(&evidence(), &a);
        assert_eq!(ev.list("Q2").unwrap().chunk_ids(), ["D2", "D1", "D3"]);
        ev.list("Q2").unwrap().check_invariants().unwrap();
    }

    #[test]
    fn set_filter_marks_stale() {
        let a = Action::SetFilter { filter: RetrievalFilter::allow(&["sigir.org"]) };
        let ev = apply_retrieval_feedback(&evidence(), &a);
        assert!(ev.stale.contains("Q2"));
        assert_eq!(ev.list("Q2").unwrap().len(), 3);
    }

    fn answer() -> Answer {
        let sec = |id: &str, text: &str| AnswerSection {
            section_id: id.into(),
            sub_id: Some(id.trim_start_matches("sec-").into()),
            heading: id.into(),
            text: text.into(),
            citations: vec!["D1".into()],
            validation_state: ValidationState::Fresh,
            note: None,
            rejected_citations: vec![],
        };
        Answer { sections: vec![sec("sec-Q1", "a"), sec("sec-Q2", "b")], style: Default::default() }
    }

    #[test]
    fn generation_actions() {
        let (a, inv) = apply_generation_feedback(
            &answer(),
            &Action::CorrectFact { section_id: "sec-Q2".into(), note: "wrong".into() },
        );
        let s = a.section("sec-Q2").unwrap();
        assert_eq!(s.validation_state, ValidationState::Flagged);
        assert_eq!(s.rejected_citations, ["D1"]);
        assert_eq!(inv.sections_to_regenerate, Some(vec!["sec-Q2".to_string()]));

        let (a, inv) = apply_generation_feedback(
            &answer(),
            &Action::EditSection { section_id: "sec-Q1".into(), new_text: "a".into() },
        );
        assert_eq!(a.section("sec-Q1").unwrap().validation_state, ValidationState::UserValidated);
        assert!(inv.is_empty());
        let (a, _) = apply_generation_feedback(
            &answer(),
            &Action::EditSection { section_id: "sec-Q1".into(), new_text: "z".into() },
        );
        assert_eq!(a.section("sec-Q1").unwrap().validation_state, ValidationState::UserCorrected);

        let (_, inv) = apply_generation_feedback(&a, &Action::AdjustStyle { style: Default::default() });
        assert_eq!(inv.sections_to_regenerate, Some(vec!["sec-Q2".to_string()]));
    }

    #[test]
    fn invalidation_closure() {
        let ev = |action: Action| FeedbackEvent::new("s", 1, Actor::Human, Timestamp::from_millis(0).unwrap(), action);
        let add =
            invalidation_set(&ev(Action::AddSubQuery { text: "x".into(), insert_position: 0, constraints: vec![] }));
        assert_eq!(add.stages_to_rerun, [Stage::Retrieval, Stage::Generation]);
        let ann = invalidation_set(&ev(Action::AnnotateRelevance {
            sub_id: "Q2".into(),
            chunk_id: "D3".into(),
            label: RelevanceLabel::Irrelevant,
        }));
        assert_eq!(ann.stages_to_rerun, [Stage::Generation]);
        let rate = invalidation_set(&ev(Action::Rate { rating: crate::domain::Rating::Dislike, comment: None }));
        assert!(rate.is_empty());
    }
}
