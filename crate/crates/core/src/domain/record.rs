//! Canonical line-delimited record format.
//!
//! One JSON object per line, with a `type` discriminator naming the domain
//! type in snake_case and the type's own field names. The same format is
//! used on the wire and in every log and store file.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    Answer, AnswerSection, DocumentChunk, EvidenceSet, FeedbackEvent, QueryPlan, RankedList, RetrievalFilter, SubQuery,
    UserProfile, UserQuery,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    UserQuery(UserQuery),
    SubQuery(SubQuery),
    QueryPlan(QueryPlan),
    DocumentChunk(DocumentChunk),
    RetrievalFilter(RetrievalFilter),
    RankedList(RankedList),
    EvidenceSet(EvidenceSet),
    AnswerSection(AnswerSection),
    Answer(Answer),
    FeedbackEvent(FeedbackEvent),
    UserProfile(UserProfile),
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Serializes one value as a single line (no trailing newline).
pub fn encode<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("domain records always serialize")
}

pub fn decode<T: DeserializeOwned>(line: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(line)
}

/// Reads every non-blank line of `path` as a `T`.
pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let io_err = |source| RecordError::Io { path: path.display().to_string(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode(&line).map_err(|source| RecordError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Writes `values` one per line, replacing the file atomically.
pub fn write_lines<T: Serialize>(path: &Path, values: &[T]) -> io::Result<()> {
    let mut body = String::new();
    for v in values {
        body.push_str(&encode(v));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

/// Write-temp-then-rename in the destination directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp-{}", uuid::Uuid::new_v4().simple()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Reads a corpus file of `document_chunk` records.
pub fn read_corpus(path: &Path) -> Result<Vec<DocumentChunk>, RecordError> {
    let records: Vec<Record> = read_lines(path)?;
    Ok(records
        .into_iter()
        .filter_map(|r| match r {
            Record::DocumentChunk(c) => Some(c),
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, Actor, QueryPlan, Stage, Timestamp};

    #[test]
    fn event_line_has_type_and_kind() {
        let e = FeedbackEvent {
            event_id: "e1".into(),
            session_id: "s".into(),
            seq: 1,
            stage: Stage::Decomposition,
            actor: Actor::Human,
            occurred_at: Timestamp::from_millis(0).unwrap(),
            action: Action::RemoveSubQuery { sub_id: "Q4".into() },
        };
        let line = encode(&Record::FeedbackEvent(e.clone()));
        assert!(line.starts_with(r#"{"type":"feedback_event","event_id":"e1""#), "{line}");
        assert!(line.contains(r#""action":{"kind":"remove_sub_query","sub_id":"Q4"}"#));
        assert_eq!(decode::<Record>(&line).unwrap(), Record::FeedbackEvent(e));
    }

    #[test]
    fn plan_round_trips() {
        let p = QueryPlan::initial(["a", "b"]);
        let line = encode(&Record::QueryPlan(p.clone()));
        assert_eq!(decode::<Record>(&line).unwrap(), Record::QueryPlan(p));
    }
}
