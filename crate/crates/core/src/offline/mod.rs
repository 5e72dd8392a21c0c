//! Offline update: compiles session logs over a time window into
//! stage-specific training samples and exports them as daily batches.

mod compile;
mod export;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use compile::{compile, reconcile, Reconciliation, MINIMAL_EDIT};
pub use export::{export_batch, Manifest, BATCH_FORMAT};

use crate::domain::{Actor, Timestamp};
use crate::session::{parse_log, LogRecord};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OfflineError {
    #[error("window end {to} is not after start {from}")]
    EmptyWindow { from: Timestamp, to: Timestamp },
    #[error("io error: {0}")]
    Io(String),
}

/// Half-open interval `[from, to)` on event `occurred_at`, UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: Timestamp,
    pub to: Timestamp,
}

impl Window {
    pub fn new(from: Timestamp, to: Timestamp) -> Result<Self, OfflineError> {
        if to <= from {
            return Err(OfflineError::EmptyWindow { from, to });
        }
        Ok(Window { from, to })
    }

    /// Whole days `[from, to)`; `to` is exclusive.
    pub fn days(from: NaiveDate, to: NaiveDate) -> Result<Self, OfflineError> {
        Self::new(Timestamp::start_of(from), Timestamp::start_of(to))
    }

    pub fn contains(&self, at: Timestamp) -> bool {
        self.from <= at && at < self.to
    }
}

pub type ActorMix = BTreeMap<Actor, u32>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPair {
    pub session_id: String,
    pub query: String,
    /// Sub-query texts with constraints appended as ` [key=value]`.
    pub negative_plan: Vec<String>,
    pub positive_plan: Vec<String>,
    pub edit_count: usize,
    pub source_events: Vec<String>,
    pub actor_mix: ActorMix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Label,
    Rerank,
    FilterExclusion,
    Citation,
}

impl Signal {
    pub fn is_explicit(self) -> bool {
        matches!(self, Signal::Label | Signal::Rerank)
    }
}

/// Why a chunk ended up on one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkNote {
    pub chunk_id: String,
    pub polarity: Polarity,
    pub signal: Signal,
    /// 0.5 for partially relevant labels, 1.0 otherwise.
    pub weight: f64,
    pub event_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPreference {
    pub session_id: String,
    pub sub_id: String,
    pub sub_query: String,
    pub positive_chunks: Vec<String>,
    pub negative_chunks: Vec<String>,
    pub notes: Vec<ChunkNote>,
    pub source_events: Vec<String>,
    pub actor_mix: ActorMix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationPreference {
    pub session_id: String,
    pub section_id: String,
    pub query: String,
    /// Short hash of the section's evidence list at window end.
    pub evidence_digest: String,
    pub chosen_text: String,
    pub rejected_text: String,
    pub edit_distance: usize,
    pub source_events: Vec<String>,
    pub actor_mix: ActorMix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidecarKind {
    /// Identical or minimally modified section edit.
    AcceptedSection,
    /// Flagged section whose text did not change afterwards.
    RejectedOnly,
    /// Section removed before the window ended.
    SectionRemoved,
    StyleAdjustment,
    AcceptedAnswer,
    RejectedAnswer,
    DecompositionNoNetChange,
    RetrievalNoSignal,
    FilterNoExclusion,
}

/// Feedback that carries no pairwise sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub session_id: String,
    pub kind: SidecarKind,
    pub section_id: Option<String>,
    pub text: Option<String>,
    pub source_events: Vec<String>,
    pub actor_mix: ActorMix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub decomposition: Vec<DecompositionPair>,
    pub retrieval: Vec<RetrievalPreference>,
    pub generation: Vec<GenerationPreference>,
    pub accepted: Vec<SidecarEntry>,
    /// Logs that could not be read, by name.
    pub skipped_logs: Vec<String>,
}

/// A named session log, or the reason it could not be read.
pub type LogInput = (String, Result<Vec<LogRecord>, String>);

/// Reads every log under `dir`: session directories holding a `log` file,
/// or plain log files. Unreadable logs are returned as errors, not raised.
pub fn load_logs(dir: &Path) -> Result<Vec<LogInput>, OfflineError> {
    let io = |e: std::io::Error| OfflineError::Io(format!("{}: {e}", dir.display()));
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let file = if path.is_dir() { path.join("log") } else { path.clone() };
        if name.starts_with('.') || !file.is_file() {
            continue;
        }
        let parsed = std::fs::read_to_string(&file)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_log(&t).map_err(|e| e.to_string()));
        out.push((name, parsed));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
