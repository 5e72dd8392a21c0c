//! Feedback store: reusable debug templates packaged from sessions, with
//! usage metrics and an in-system credit ledger.

mod catalog;
mod ledger;
mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use catalog::Store;
pub use ledger::{LedgerEntry, UsageKind, INITIAL_ESCROW};
pub use template::{apply_template, match_templates, package_template, ApplyReport, MATCH_THRESHOLD};

use crate::domain::{AnswerStyle, Constraint, RelevanceLabel, RetrievalFilter, Stage, Timestamp};
use crate::session::SessionError;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("{payer} has {balance} credits, needs {price}")]
    InsufficientCredits { payer: String, balance: i64, price: u64 },
    #[error("session is not publishable: {0}")]
    Unpublishable(String),
    #[error("event {event_id} has no stable positional description: {reason}")]
    UnresolvableReference { event_id: String, reason: String },
    #[error("no template step could be applied")]
    AllStepsUnresolvable(ApplyReport),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("io error: {0}")]
    Io(String),
    #[error("bad store data: {0}")]
    Format(String),
}

/// Normalized query tokens plus the slot values captured from the query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPattern {
    /// Sorted token multiset.
    pub tokens: Vec<String>,
    /// Decomposition rule the source query matched, if any.
    pub rule_id: Option<String>,
    /// Slot name to the source query's value; step texts refer to these as
    /// `{name}`.
    pub slots: BTreeMap<String, String>,
}

/// A feedback action with session-local ids replaced by positions.
/// Sub-query and section positions are 0-based; chunk ranks are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepAction {
    AddSubQuery {
        text: String,
        insert_position: usize,
        constraints: Vec<Constraint>,
    },
    RemoveSubQuery {
        sub_position: usize,
    },
    /// New order as positions in the current plan.
    ReorderSubQueries {
        order: Vec<usize>,
    },
    RefineConstraint {
        sub_position: usize,
        key: String,
        value: String,
    },
    AnnotateRelevance {
        sub_position: usize,
        chunk_rank: usize,
        label: RelevanceLabel,
    },
    RerankEvidence {
        sub_position: usize,
        chunk_rank: usize,
        new_rank: usize,
    },
    SetFilter {
        filter: RetrievalFilter,
    },
    CorrectFact {
        section_position: usize,
        note: String,
    },
    EditSection {
        section_position: usize,
        new_text: String,
    },
    AdjustStyle {
        style: AnswerStyle,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateStep {
    pub stage: Stage,
    pub action: StepAction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub views: u64,
    pub downloads: u64,
    pub resolutions: u64,
    pub purchases: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebugTemplate {
    pub template_id: String,
    pub author_id: String,
    pub title: String,
    pub query_pattern: QueryPattern,
    pub steps: Vec<TemplateStep>,
    pub price_credits: u64,
    pub metrics: Metrics,
    pub created_at: Timestamp,
    pub source_session: String,
}
