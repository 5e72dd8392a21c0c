use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::state::StageStatus;
use super::SessionError;
use crate::domain::record;
use crate::domain::{Answer, EvidenceSet, FeedbackEvent, QueryPlan, Stage, Timestamp, UserQuery};

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    /// Initial pipeline outputs; always the first record.
    Bootstrap {
        session_id: String,
        query: UserQuery,
        plan: QueryPlan,
        evidence: EvidenceSet,
        answer: Answer,
    },
    FeedbackEvent(FeedbackEvent),
    /// Stage outputs right after the event (or retry) with this seq.
    Outcome {
        seq: u64,
        plan: QueryPlan,
        evidence: EvidenceSet,
        answer: Answer,
        stage_status: BTreeMap<Stage, StageStatus>,
    },
    /// A shadow-agent proposal the user turned down.
    ProposalRejection {
        proposal_id: String,
        event: FeedbackEvent,
        at: Timestamp,
    },
    /// Re-run of stages left in error.
    Retry {
        seq: u64,
        at: Timestamp,
    },
}

impl LogRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            LogRecord::Bootstrap { .. } => "bootstrap",
            LogRecord::FeedbackEvent(_) => "feedback_event",
            LogRecord::Outcome { .. } => "outcome",
            LogRecord::ProposalRejection { .. } => "proposal_rejection",
            LogRecord::Retry { .. } => "retry",
        }
    }
}

/// Append-only record list, optionally mirrored to a file that is only
/// ever appended to and synced after each record.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
    path: Option<PathBuf>,
    file: Option<File>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates a new log file; fails if one exists.
    pub fn create(path: &Path) -> Result<Self, SessionError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(SessionError::io)?;
        }
        let file = OpenOptions::new().create_new(true).append(true).open(path).map_err(SessionError::io)?;
        Ok(EventLog { records: Vec::new(), path: Some(path.to_path_buf()), file: Some(file) })
    }

    /// Loads an existing log for appending.
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        let records = read_log(path)?;
        let file = OpenOptions::new().append(true).open(path).map_err(SessionError::io)?;
        Ok(EventLog { records, path: Some(path.to_path_buf()), file: Some(file) })
    }

    pub fn from_records(records: Vec<LogRecord>) -> Self {
        EventLog { records, path: None, file: None }
    }

    pub fn append(&mut self, rec: LogRecord) -> Result<(), SessionError> {
        if let Some(f) = self.file.as_mut() {
            let mut line = record::encode(&rec);
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(SessionError::io)?;
            f.sync_data().map_err(SessionError::io)?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn events(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::FeedbackEvent(e) => Some(e),
            _ => None,
        })
    }

    /// Canonical text of the whole log.
    pub fn to_text(&self) -> String {
        encode_log(&self.records)
    }
}

pub fn encode_log(records: &[LogRecord]) -> String {
    records.iter().map(|r| record::encode(r) + "\n").collect()
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, SessionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| record::decode(l).map_err(|e| SessionError::CorruptLog(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, SessionError> {
    let text = std::fs::read_to_string(path).map_err(SessionError::io)?;
    parse_log(&text)
}
