//! Stage-level feedback for a generative search pipeline.
//!
//! The crate is organised around the three pipeline stages (query
//! decomposition, retrieval & ranking, answer generation) and the feedback
//! that users or a personalized agent attach to each of them:
//!
//! - [`domain`]: shared value types, the action taxonomy and event validation.
//! - [`retrieval`]: inverted index, BM25 scoring and filtered search.
//! - [`pipeline`]: the decomposer / retriever / generator stages.
//! - [`feedback`]: pure application of feedback actions and invalidation.
//! - [`session`]: event-sourced sessions with online re-execution and replay.
//! - [`agent`]: profile learning and rule-based feedback proposals.
//! - [`offline`]: compilation of session logs into training batches.
//! - [`store`]: reusable debug templates, matching, replay and credit ledger.
//!
//! Data-parallel loops (per-sub-query retrieval, per-log compilation) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled.

pub mod agent;
pub mod domain;
pub mod feedback;
pub mod layout;
pub mod offline;
pub mod par;
pub mod pipeline;
pub mod retrieval;
pub mod session;
pub mod sim;
pub mod store;
pub mod text;

pub use domain::{
    Action, Actor, Answer, AnswerSection, AnswerStyle, DocumentChunk, EvidenceSet, FeedbackEvent, QueryPlan,
    RankedList, RelevanceLabel, RetrievalFilter, Stage, SubQuery, Timestamp, UserProfile, UserQuery,
};
pub use par::ExecMode;
pub use pipeline::{Pipeline, PipelineConfig};
pub use retrieval::Index;
pub use session::{Session, SessionRuntime, SessionState};
