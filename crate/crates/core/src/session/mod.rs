//! Event-sourced sessions: an append-only log of bootstrap outputs,
//! feedback events and per-event outcomes; online re-execution with a
//! per-sub-query retrieval cache; snapshots; deterministic replay.

mod advance;
mod log;
mod runtime;
mod snapshot;
mod state;
mod view;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use advance::{advance, bootstrap, rerun_dirty, SubmitReport};
pub use log::{encode_log, parse_log, read_log, EventLog, LogRecord};
pub use runtime::{SessionRuntime, SharedSession};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, Snapshot, SNAPSHOT_TAG};
pub use state::{cache_key, SessionState, StageOutputs, StageStatus};
pub use view::{EventStep, LogView, StageView};

use crate::domain::{
    validate_event, Answer, EventDraft, EvidenceSet, FeedbackEvent, QueryPlan, Rejection, Timestamp, UserQuery,
};
use crate::pipeline::{Pipeline, PipelineError, RegenScope};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("rejected: {0}")]
    Rejected(#[from] Rejection),
    #[error("pipeline error: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("snapshot version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("session {0} already exists")]
    AlreadyExists(String),
    #[error("invalid session id `{0}`")]
    InvalidId(String),
    #[error("io error: {0}")]
    Io(String),
}

impl SessionError {
    pub(crate) fn io(e: std::io::Error) -> Self {
        SessionError::Io(e.to_string())
    }

    /// Errors caused by the caller's input rather than by the system.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SessionError::Rejected(_)
                | SessionError::Pipeline(PipelineError::InvalidQuery(_))
                | SessionError::InvalidId(_)
        )
    }
}

/// State right after bootstrap, reconstructed from the bootstrap record.
pub fn from_bootstrap(
    session_id: &str,
    query: &UserQuery,
    plan: &QueryPlan,
    evidence: &EvidenceSet,
    answer: &Answer,
) -> SessionState {
    let ffp = evidence.active_filter.fingerprint();
    SessionState {
        session_id: session_id.to_string(),
        query: query.clone(),
        plan: plan.clone(),
        evidence: evidence.clone(),
        answer: answer.clone(),
        stage_status: state::all_clean(),
        log_offset: 0,
        retrieval_cache: plan
            .sub_queries
            .iter()
            .filter_map(|s| evidence.list(&s.sub_id).map(|l| (cache_key(s, &ffp), l.clone())))
            .collect(),
    }
}

fn bootstrap_record(state: &SessionState) -> LogRecord {
    LogRecord::Bootstrap {
        session_id: state.session_id.clone(),
        query: state.query.clone(),
        plan: state.plan.clone(),
        evidence: state.evidence.clone(),
        answer: state.answer.clone(),
    }
}

fn outcome_record(state: &SessionState) -> LogRecord {
    LogRecord::Outcome {
        seq: state.log_offset,
        plan: state.plan.clone(),
        evidence: state.evidence.clone(),
        answer: state.answer.clone(),
        stage_status: state.stage_status.clone(),
    }
}

/// Folds `records` into a state, re-executing every event with `pipeline`.
///
/// Each recomputed state is checked against the logged outcome that
/// follows it; any divergence, seq gap or event that fails validation is a
/// corrupt log. Outcomes that record a stage error are taken as logged,
/// since backend failures are not reproducible.
pub fn replay(pipeline: &Pipeline, records: &[LogRecord]) -> Result<SessionState, SessionError> {
    let Some(LogRecord::Bootstrap { session_id, query, plan, evidence, answer }) = records.first() else {
        return Err(SessionError::CorruptLog("log does not start with a bootstrap record".into()));
    };
    let mut state = from_bootstrap(session_id, query, plan, evidence, answer);
    for (i, rec) in records.iter().enumerate().skip(1) {
        let line = i + 1;
        match rec {
            LogRecord::Bootstrap { .. } => {
                return Err(SessionError::CorruptLog(format!("line {line}: second bootstrap record")));
            }
            LogRecord::FeedbackEvent(e) => {
                if e.seq != state.log_offset + 1 {
                    return Err(SessionError::CorruptLog(format!(
                        "line {line}: seq {} follows {}",
                        e.seq, state.log_offset
                    )));
                }
                validate_event(e, &state).map_err(|r| SessionError::CorruptLog(format!("line {line}: {r}")))?;
                state = advance(pipeline, &state, e).0;
            }
            LogRecord::Outcome { seq, plan, evidence, answer, stage_status } => {
                if *seq != state.log_offset {
                    return Err(SessionError::CorruptLog(format!("line {line}: outcome for seq {seq} out of place")));
                }
                let all_clean = stage_status.values().all(|s| *s == StageStatus::Clean);
                if all_clean {
                    let ok = &state.plan == plan
                        && &state.evidence == evidence
                        && &state.answer == answer
                        && &state.stage_status == stage_status;
                    if !ok {
                        return Err(SessionError::CorruptLog(format!(
                            "line {line}: recomputed state diverges from the logged outcome for seq {seq}"
                        )));
                    }
                } else {
                    state.plan = plan.clone();
                    state.evidence = evidence.clone();
                    state.answer = answer.clone();
                    state.stage_status = stage_status.clone();
                }
            }
            LogRecord::ProposalRejection { .. } => {}
            LogRecord::Retry { seq, .. } => {
                if *seq != state.log_offset {
                    return Err(SessionError::CorruptLog(format!("line {line}: retry for seq {seq} out of place")));
                }
                rerun_dirty(pipeline, &mut state, RegenScope::All);
            }
        }
    }
    Ok(state)
}

/// A live session: current state plus its log, optionally persisted to a
/// session directory. Single writer; wrap in [`SharedSession`] to share.
#[derive(Debug)]
pub struct Session {
    pipeline: Arc<Pipeline>,
    state: SessionState,
    log: EventLog,
    dir: Option<PathBuf>,
}

impl Session {
    /// Runs the pipeline and starts an in-memory log.
    pub fn open(pipeline: Arc<Pipeline>, session_id: &str, query: UserQuery) -> Result<Self, SessionError> {
        let state = bootstrap(&pipeline, session_id, &query)?;
        let mut log = EventLog::in_memory();
        log.append(bootstrap_record(&state))?;
        Ok(Session { pipeline, state, log, dir: None })
    }

    /// Like [`Session::open`], persisting `log` and `snapshot` under `dir`.
    pub fn create_in(
        dir: &Path,
        pipeline: Arc<Pipeline>,
        session_id: &str,
        query: UserQuery,
    ) -> Result<Self, SessionError> {
        let state = bootstrap(&pipeline, session_id, &query)?;
        let mut log = EventLog::create(&dir.join("log"))?;
        log.append(bootstrap_record(&state))?;
        let session = Session { pipeline, state, log, dir: Some(dir.to_path_buf()) };
        session.persist_snapshot()?;
        Ok(session)
    }

    /// Loads a persisted session. A snapshot that covers the whole log is
    /// used as is; otherwise the log is replayed.
    pub fn load(dir: &Path, pipeline: Arc<Pipeline>) -> Result<Self, SessionError> {
        let log = EventLog::open(&dir.join("log"))?;
        let snap = read_snapshot(&dir.join("snapshot")).ok().filter(|s| s.log_records == log.len());
        let state = match snap {
            Some(s) => s.state,
            None => replay(&pipeline, log.records())?,
        };
        let session = Session { pipeline, state, log, dir: Some(dir.to_path_buf()) };
        session.persist_snapshot()?;
        Ok(session)
    }

    /// Rebuilds an in-memory session from log records.
    pub fn replay(pipeline: Arc<Pipeline>, records: Vec<LogRecord>) -> Result<Self, SessionError> {
        let state = replay(&pipeline, &records)?;
        Ok(Session { pipeline, state, log: EventLog::from_records(records), dir: None })
    }

    /// Reattaches a snapshot to its log without replaying.
    pub fn restore(pipeline: Arc<Pipeline>, snapshot: Snapshot, records: Vec<LogRecord>) -> Result<Self, SessionError> {
        if snapshot.log_records != records.len() {
            return Err(SessionError::CorruptSnapshot(format!(
                "snapshot covers {} records, log has {}",
                snapshot.log_records,
                records.len()
            )));
        }
        Ok(Session { pipeline, state: snapshot.state, log: EventLog::from_records(records), dir: None })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        &self.pipeline
    }

    pub fn id(&self) -> &str {
        &self.state.session_id
    }

    pub fn next_seq(&self) -> u64 {
        self.state.log_offset + 1
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { log_records: self.log.len(), state: self.state.clone() }
    }

    fn persist_snapshot(&self) -> Result<(), SessionError> {
        match &self.dir {
            Some(dir) => write_snapshot(&dir.join("snapshot"), &self.snapshot()),
            None => Ok(()),
        }
    }

    /// Validates, logs and applies one event, then re-executes downstream
    /// stages. The event is durable before re-execution starts.
    pub fn submit(&mut self, event: FeedbackEvent) -> Result<SubmitReport, SessionError> {
        validate_event(&event, &self.state)?;
        self.log.append(LogRecord::FeedbackEvent(event.clone()))?;
        let (next, report) = advance(&self.pipeline, &self.state, &event);
        self.state = next;
        self.log.append(outcome_record(&self.state))?;
        self.persist_snapshot()?;
        Ok(report)
    }

    /// Completes a draft against the current state and submits it.
    pub fn submit_draft(
        &mut self,
        draft: EventDraft,
        now: Timestamp,
    ) -> Result<(FeedbackEvent, SubmitReport), SessionError> {
        let event = draft.complete(&self.state.session_id, self.next_seq(), now);
        let report = self.submit(event.clone())?;
        Ok((event, report))
    }

    /// Logs a declined agent proposal. State is untouched.
    pub fn record_rejection(
        &mut self,
        proposal_id: &str,
        event: FeedbackEvent,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        self.log.append(LogRecord::ProposalRejection { proposal_id: proposal_id.to_string(), event, at })?;
        self.persist_snapshot()
    }

    /// Re-runs stages left dirty or in error. No-op on a clean session.
    pub fn retry(&mut self, at: Timestamp) -> Result<SubmitReport, SessionError> {
        if self.state.is_clean() {
            return Ok(SubmitReport {
                seq: self.state.log_offset,
                stage_status: self.state.stage_status.clone(),
                ..Default::default()
            });
        }
        self.log.append(LogRecord::Retry { seq: self.state.log_offset, at })?;
        let mut next = self.state.clone();
        let report = rerun_dirty(&self.pipeline, &mut next, RegenScope::All);
        self.state = next;
        self.log.append(outcome_record(&self.state))?;
        self.persist_snapshot()?;
        Ok(report)
    }
}
