//! Snapshot file: a format tag line, a sha256 line over the body, and the
//! JSON body on the third line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SessionError, SessionState};
use crate::domain::record;

pub const SNAPSHOT_TAG: &str = "stagewise-session-snapshot/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of log records folded into `state`.
    pub log_records: usize,
    pub state: SessionState,
}

pub fn encode_snapshot(snap: &Snapshot) -> String {
    let body = record::encode(snap);
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{SNAPSHOT_TAG}\n{digest}\n{body}\n")
}

pub fn decode_snapshot(text: &str) -> Result<Snapshot, SessionError> {
    let mut lines = text.splitn(3, '\n');
    let tag = lines.next().unwrap_or("");
    if tag != SNAPSHOT_TAG {
        return Err(SessionError::VersionMismatch(format!("expected `{SNAPSHOT_TAG}`, found `{tag}`")));
    }
    let (Some(digest), Some(body)) = (lines.next(), lines.next()) else {
        return Err(SessionError::CorruptSnapshot("snapshot is truncated".into()));
    };
    let body = body.strip_suffix('\n').unwrap_or(body);
    if hex::encode(Sha256::digest(body.as_bytes())) != digest {
        return Err(SessionError::CorruptSnapshot("checksum mismatch".into()));
    }
    record::decode(body).map_err(|e| SessionError::CorruptSnapshot(e.to_string()))
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), SessionError> {
    record::write_atomic(path, encode_snapshot(snap).as_bytes()).map_err(SessionError::io)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SessionError> {
    let text = std::fs::read_to_string(path).map_err(SessionError::io)?;
    decode_snapshot(&text)
}
