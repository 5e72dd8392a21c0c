//! Shared domain types, the stage/action taxonomy and event validation.
//!
//! Everything here is a plain value: cloneable, comparable and serializable
//! to the canonical record format in [`record`].

mod answer;
mod event;
mod evidence;
mod profile;
mod query;
pub mod record;
mod time;
mod validate;

pub use answer::{
    Answer, AnswerSection, AnswerStyle, Layout, Tone, ValidationState, Verbosity, NO_EVIDENCE_SECTION_ID,
    NO_EVIDENCE_TEXT,
};
pub use event::{stage_of, Action, Actor, EventDraft, FeedbackEvent, Rating, Stage};
pub use evidence::{
    domain_matches, DocumentChunk, EvidenceSet, RankedEntry, RankedList, RelevanceLabel, RetrievalFilter,
    SubQueryOverlay,
};
pub use profile::{Preference, UserProfile};
pub use query::{Constraint, Provenance, QueryPlan, SubQuery, UserQuery};
pub use record::Record;
pub use time::{date_or_unknown, Timestamp};
pub use validate::{validate_event, RejectCode, Rejection};
