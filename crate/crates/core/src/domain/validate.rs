//! Structural validation of feedback events against a session snapshot.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, FeedbackEvent};
use crate::pipeline::MAX_SUBQUERIES;
use crate::session::SessionState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    UnknownReference,
    OutOfBounds,
    IncompletePermutation,
    StageMismatch,
    StaleSequence,
    InvalidValue,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::UnknownReference => "unknown_reference",
            RejectCode::OutOfBounds => "out_of_bounds",
            RejectCode::IncompletePermutation => "incomplete_permutation",
            RejectCode::StageMismatch => "stage_mismatch",
            RejectCode::StaleSequence => "stale_sequence",
            RejectCode::InvalidValue => "invalid_value",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{}: {reason}", code.as_str())]
pub struct Rejection {
    pub code: RejectCode,
    pub reason: String,
}

impl Rejection {
    fn new(code: RejectCode, reason: impl fmt::Display) -> Self {
        Rejection { code, reason: reason.to_string() }
    }
}

/// Checks `event` against the current materialized state.
///
/// Succeeds iff the stage tag matches the action family, the sequence number
/// is the next one, every referenced id exists, positions and ranks are in
/// bounds and permutations are complete.
pub fn validate_event(event: &FeedbackEvent, snapshot: &SessionState) -> Result<(), Rejection> {
    use RejectCode::*;

    if event.session_id != snapshot.session_id {
        return Err(Rejection::new(UnknownReference, format!("event targets session {}", event.session_id)));
    }
    if event.stage != event.action.stage() {
        return Err(Rejection::new(
            StageMismatch,
            format!("{} is a {} action, tagged {}", event.action.kind(), event.action.stage(), event.stage),
        ));
    }
    if event.seq != snapshot.log_offset + 1 {
        return Err(Rejection::new(
            StaleSequence,
            format!("expected seq {}, got {}", snapshot.log_offset + 1, event.seq),
        ));
    }

    let plan = &snapshot.plan;
    let known_sub = |sub_id: &str| {
        plan.get(sub_id).map(|_| ()).ok_or_else(|| Rejection::new(UnknownReference, format!("no sub-query {sub_id}")))
    };
    let known_section = |section_id: &str| {
        snapshot
            .answer
            .section(section_id)
            .map(|_| ())
            .ok_or_else(|| Rejection::new(UnknownReference, format!("no answer section {section_id}")))
    };

    match &event.action {
        Action::AddSubQuery { text, insert_position, .. } => {
            if text.trim().is_empty() {
                return Err(Rejection::new(InvalidValue, "sub-query text is empty"));
            }
            if *insert_position > plan.len() {
                return Err(Rejection::new(OutOfBounds, format!("insert position {insert_position} > {}", plan.len())));
            }
            if plan.len() >= MAX_SUBQUERIES {
                return Err(Rejection::new(OutOfBounds, format!("plan already has {MAX_SUBQUERIES} sub-queries")));
            }
        }
        Action::RemoveSubQuery { sub_id } => {
            known_sub(sub_id)?;
            if plan.len() == 1 {
                return Err(Rejection::new(OutOfBounds, "cannot remove the only sub-query"));
            }
        }
        Action::ReorderSubQueries { permutation } => {
            let given: BTreeSet<&String> = permutation.iter().collect();
            if let Some(unknown) = permutation.iter().find(|id| plan.get(id).is_none()) {
                return Err(Rejection::new(UnknownReference, format!("no sub-query {unknown}")));
            }
            if given.len() != permutation.len() || permutation.len() != plan.len() {
                return Err(Rejection::new(
                    IncompletePermutation,
                    format!("permutation covers {} of {} sub-queries", given.len(), plan.len()),
                ));
            }
        }
        Action::RefineConstraint { sub_id, key, .. } => {
            known_sub(sub_id)?;
            if key.trim().is_empty() {
                return Err(Rejection::new(InvalidValue, "constraint key is empty"));
            }
        }
        Action::AnnotateRelevance { sub_id, chunk_id, .. } => {
            known_sub(sub_id)?;
            let list = snapshot.evidence.list(sub_id);
            if !list.is_some_and(|l| l.contains(chunk_id)) {
                return Err(Rejection::new(UnknownReference, format!("chunk {chunk_id} not in evidence for {sub_id}")));
            }
        }
        Action::RerankEvidence { sub_id, chunk_id, new_rank } => {
            known_sub(sub_id)?;
            let Some(list) = snapshot.evidence.list(sub_id).filter(|l| l.contains(chunk_id)) else {
                return Err(Rejection::new(UnknownReference, format!("chunk {chunk_id} not in evidence for {sub_id}")));
            };
            if *new_rank == 0 || *new_rank > list.len() {
                return Err(Rejection::new(OutOfBounds, format!("rank {new_rank} outside 1..={}", list.len())));
            }
        }
        Action::SetFilter { filter } => {
            filter.check().map_err(|e| Rejection::new(InvalidValue, e))?;
        }
        Action::CorrectFact { section_id, note } => {
            known_section(section_id)?;
            if note.trim().is_empty() {
                return Err(Rejection::new(InvalidValue, "correction note is empty"));
            }
        }
        Action::EditSection { section_id, .. } => known_section(section_id)?,
        Action::AdjustStyle { .. } | Action::Rate { .. } => {}
    }
    Ok(())
}
