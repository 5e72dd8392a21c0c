//! Shadow user agent: learns a preference profile from past session logs
//! and proposes stage-level feedback for one-tap confirmation.

mod confirm;
mod llm;
mod profile;
mod prompt;
mod rules;

use serde::{Deserialize, Serialize};

pub use confirm::{confirm, load_proposals, save_proposals, Decision};
pub use llm::{parse_llm_actions, suggest_with_llm, LlmSuggestions};
pub use profile::{load_profile, observations, save_profile, update_profile, Observation};
pub use prompt::{action_menu, render_prompt};
pub use rules::{suggest_feedback, MAX_PROPOSALS, RULE_THRESHOLD};

use crate::domain::FeedbackEvent;
use crate::session::SessionError;
use crate::text::tokenize;

/// Fixed preference vocabulary.
pub const DIMENSIONS: [&str; 6] =
    ["trusted_domain", "blocked_domain", "query_scope", "accommodation_priority", "style_layout", "verbosity"];

/// Keyword table for sub-query topics, checked in order.
pub const TOPICS: &[(&str, &[&str])] = &[
    ("sightseeing", &["sightseeing", "attractions", "attraction", "tour", "tours", "museum", "museums"]),
    ("flights", &["flight", "flights", "airport", "airline", "airlines"]),
    ("hotels", &["hotel", "hotels", "accommodation", "accommodations", "lodging", "stay"]),
    ("registration", &["registration", "register", "fee", "fees"]),
    ("venue", &["where", "venue", "held", "location"]),
];

/// Topic of a sub-query text, if any keyword matches.
pub fn topic_of(text: &str) -> Option<&'static str> {
    let tokens = tokenize(text);
    TOPICS.iter().find(|(_, kws)| tokens.iter().any(|t| kws.contains(&t.as_str()))).map(|(t, _)| *t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Accepted,
    Rejected,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: String,
    pub session_id: String,
    /// Log offset of the snapshot the proposal was generated from.
    pub generated_at_offset: u64,
    pub rule_id: String,
    pub proposed_event: FeedbackEvent,
    pub rationale: String,
    pub confidence: f64,
    pub status: ProposalStatus,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("log for user {found} folded into profile of {expected}")]
    ForeignLog { expected: String, found: String },
    #[error("proposal {0} expired: the session changed since it was generated")]
    ExpiredProposal(String),
    #[error("proposal {0} is not pending")]
    NotPending(String),
    #[error("unknown proposal {0}")]
    UnknownProposal(String),
    #[error("stage {0} has no agent template")]
    UnsupportedStage(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("io error: {0}")]
    Io(String),
}
