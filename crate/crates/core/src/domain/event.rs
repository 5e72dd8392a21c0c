use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnswerStyle, Constraint, RelevanceLabel, RetrievalFilter, Timestamp};

/// Pipeline stage a feedback action targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decomposition,
    Retrieval,
    Generation,
    Final,
}

impl Stage {
    pub const PIPELINE: [Stage; 3] = [Stage::Decomposition, Stage::Retrieval, Stage::Generation];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decomposition => "decomposition",
            Stage::Retrieval => "retrieval",
            Stage::Generation => "generation",
            Stage::Final => "final",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decomposition" => Ok(Stage::Decomposition),
            "retrieval" => Ok(Stage::Retrieval),
            "generation" => Ok(Stage::Generation),
            "final" => Ok(Stage::Final),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

/// Who produced a feedback event. Human events are the "gold" signal;
/// agent and template events are AI-assisted or reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Human,
    ShadowAgent,
    TemplateReplay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Like,
    Dislike,
}

/// Stage-tagged feedback action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    AddSubQuery {
        text: String,
        insert_position: usize,
        constraints: Vec<Constraint>,
    },
    RemoveSubQuery {
        sub_id: String,
    },
    ReorderSubQueries {
        permutation: Vec<String>,
    },
    RefineConstraint {
        sub_id: String,
        key: String,
        value: String,
    },
    AnnotateRelevance {
        sub_id: String,
        chunk_id: String,
        label: RelevanceLabel,
    },
    RerankEvidence {
        sub_id: String,
        chunk_id: String,
        new_rank: usize,
    },
    SetFilter {
        filter: RetrievalFilter,
    },
    CorrectFact {
        section_id: String,
        note: String,
    },
    EditSection {
        section_id: String,
        new_text: String,
    },
    AdjustStyle {
        style: AnswerStyle,
    },
    /// Free-text comments are stored verbatim and never interpreted.
    Rate {
        rating: Rating,
        comment: Option<String>,
    },
}

impl Action {
    /// Stage taxonomy lookup.
    pub fn stage(&self) -> Stage {
        stage_of(self)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Action::AddSubQuery { .. } => "add_sub_query",
            Action::RemoveSubQuery { .. } => "remove_sub_query",
            Action::ReorderSubQueries { .. } => "reorder_sub_queries",
            Action::RefineConstraint { .. } => "refine_constraint",
            Action::AnnotateRelevance { .. } => "annotate_relevance",
            Action::RerankEvidence { .. } => "rerank_evidence",
            Action::SetFilter { .. } => "set_filter",
            Action::CorrectFact { .. } => "correct_fact",
            Action::EditSection { .. } => "edit_section",
            Action::AdjustStyle { .. } => "adjust_style",
            Action::Rate { .. } => "rate",
        }
    }
}

/// Total mapping from action variant to its pipeline stage.
pub fn stage_of(action: &Action) -> Stage {
    match action {
        Action::AddSubQuery { .. }
        | Action::RemoveSubQuery { .. }
        | Action::ReorderSubQueries { .. }
        | Action::RefineConstraint { .. } => Stage::Decomposition,
        Action::AnnotateRelevance { .. } | Action::RerankEvidence { .. } | Action::SetFilter { .. } => Stage::Retrieval,
        Action::CorrectFact { .. } | Action::EditSection { .. } | Action::AdjustStyle { .. } => Stage::Generation,
        Action::Rate { .. } => Stage::Final,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: String,
    pub session_id: String,
    pub seq: u64,
    pub stage: Stage,
    pub actor: Actor,
    pub occurred_at: Timestamp,
    pub action: Action,
}

impl FeedbackEvent {
    /// Builds an event with a random 128-bit id and the action's own stage.
    pub fn new(session_id: impl Into<String>, seq: u64, actor: Actor, occurred_at: Timestamp, action: Action) -> Self {
        FeedbackEvent {
            event_id: uuid::Uuid::new_v4().to_string(),
            session_id: session_id.into(),
            seq,
            stage: action.stage(),
            actor,
            occurred_at,
            action,
        }
    }
}

/// Partially specified event as submitted through the CLI or HTTP API.
/// Missing fields are filled in by [`EventDraft::complete`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDraft {
    #[serde(default)]
    pub event_id: Option<String>,
    #[serde(default)]
    pub session_id: Option<String>,
    /// Expected sequence number; omitted means "append after whatever is
    /// current" and skips the optimistic concurrency check.
    #[serde(default)]
    pub seq: Option<u64>,
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub actor: Option<Actor>,
    #[serde(default)]
    pub occurred_at: Option<Timestamp>,
    pub action: Action,
}

impl EventDraft {
    pub fn complete(self, session_id: &str, next_seq: u64, now: Timestamp) -> FeedbackEvent {
        let stage = self.stage.unwrap_or_else(|| self.action.stage());
        FeedbackEvent {
            event_id: self.event_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string()),
            session_id: self.session_id.unwrap_or_else(|| session_id.to_string()),
            seq: self.seq.unwrap_or(next_seq),
            stage,
            actor: self.actor.unwrap_or(Actor::Human),
            occurred_at: self.occurred_at.unwrap_or(now),
            action: self.action,
        }
    }
}

impl From<FeedbackEvent> for EventDraft {
    fn from(e: FeedbackEvent) -> Self {
        EventDraft {
            event_id: Some(e.event_id),
            session_id: Some(e.session_id),
            seq: Some(e.seq),
            stage: Some(e.stage),
            actor: Some(e.actor),
            occurred_at: Some(e.occurred_at),
            action: e.action,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_lookup() {
        assert_eq!(stage_of(&Action::SetFilter { filter: RetrievalFilter::default() }), Stage::Retrieval);
        assert_eq!(stage_of(&Action::AdjustStyle { style: AnswerStyle::default() }), Stage::Generation);
        assert_eq!(stage_of(&Action::Rate { rating: Rating::Like, comment: None }), Stage::Final);
        assert_eq!(stage_of(&Action::RemoveSubQuery { sub_id: "Q1".into() }), Stage::Decomposition);
    }

    #[test]
    fn draft_fills_defaults() {
        let now: Timestamp = "2025-03-10T09:00:00Z".parse().unwrap();
        let d = EventDraft {
            event_id: None,
            session_id: None,
            seq: None,
            stage: None,
            actor: None,
            occurred_at: None,
            action: Action::RemoveSubQuery { sub_id: "Q4".into() },
        };
        let e = d.complete("s1", 3, now);
        assert_eq!((e.seq, e.stage, e.actor, e.session_id.as_str()), (3, Stage::Decomposition, Actor::Human, "s1"));
        assert_eq!(e.event_id.len(), 36);
    }
}
