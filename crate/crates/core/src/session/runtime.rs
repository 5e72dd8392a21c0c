use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::{LogRecord, Session, SessionError, SessionState};
use crate::domain::UserQuery;
use crate::layout::{is_valid_id, DataLayout};
use crate::pipeline::Pipeline;

/// A session shared between concurrent readers and one writer at a time.
///
/// Writes go through [`SharedSession::write`], which holds the session
/// mutex for the whole event application. Readers get the last published
/// state, which is swapped in only after a write completes, so they see
/// either the pre- or the post-event state.
#[derive(Debug)]
pub struct SharedSession {
    writer: Mutex<Session>,
    published: RwLock<Arc<SessionState>>,
    records: RwLock<Vec<LogRecord>>,
}

impl SharedSession {
    pub fn new(session: Session) -> Self {
        let published = RwLock::new(Arc::new(session.state().clone()));
        let records = RwLock::new(session.log().records().to_vec());
        SharedSession { writer: Mutex::new(session), published, records }
    }

    pub fn id(&self) -> String {
        self.published.read().session_id.clone()
    }

    pub fn state(&self) -> Arc<SessionState> {
        self.published.read().clone()
    }

    pub fn record_count(&self) -> usize {
        self.records.read().len()
    }

    /// Log records from index `after` on.
    pub fn records_after(&self, after: usize) -> Vec<LogRecord> {
        self.records.read().iter().skip(after).cloned().collect()
    }

    /// Runs `f` with exclusive access, then publishes the new state and any
    /// appended records.
    pub fn write<R>(&self, f: impl FnOnce(&mut Session) -> R) -> R {
        let mut session = self.writer.lock();
        let out = f(&mut session);
        let mut records = self.records.write();
        let known = records.len();
        records.extend(session.log().records()[known..].iter().cloned());
        *self.published.write() = Arc::new(session.state().clone());
        out
    }
}

/// Session manager over a data directory (or purely in memory).
#[derive(Debug)]
pub struct SessionRuntime {
    pipeline: Arc<Pipeline>,
    layout: Option<DataLayout>,
    sessions: Mutex<BTreeMap<String, Arc<SharedSession>>>,
}

impl SessionRuntime {
    pub fn new(pipeline: Arc<Pipeline>, layout: Option<DataLayout>) -> Self {
        SessionRuntime { pipeline, layout, sessions: Mutex::new(BTreeMap::new()) }
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        &self.pipeline
    }

    pub fn layout(&self) -> Option<&DataLayout> {
        self.layout.as_ref()
    }

    /// Opens a new session; `session_id` defaults to a random uuid.
    pub fn open_session(
        &self,
        query: UserQuery,
        session_id: Option<String>,
    ) -> Result<Arc<SharedSession>, SessionError> {
        let id = session_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        if !is_valid_id(&id) {
            return Err(SessionError::InvalidId(id));
        }
        let mut sessions = self.sessions.lock();
        if sessions.contains_key(&id) || self.layout.as_ref().is_some_and(|l| l.log(&id).exists()) {
            return Err(SessionError::AlreadyExists(id));
        }
        let session = match &self.layout {
            Some(l) => Session::create_in(&l.session(&id), self.pipeline.clone(), &id, query)?,
            None => Session::open(self.pipeline.clone(), &id, query)?,
        };
        let shared = Arc::new(SharedSession::new(session));
        sessions.insert(id, shared.clone());
        Ok(shared)
    }

    /// Returns a loaded session, loading it from disk on first access.
    pub fn get(&self, session_id: &str) -> Result<Arc<SharedSession>, SessionError> {
        if !is_valid_id(session_id) {
            return Err(SessionError::InvalidId(session_id.to_string()));
        }
        let mut sessions = self.sessions.lock();
        if let Some(s) = sessions.get(session_id) {
            return Ok(s.clone());
        }
        let layout = self.layout.as_ref().ok_or_else(|| SessionError::NotFound(session_id.to_string()))?;
        let dir = layout.session(session_id);
        if !dir.join("log").is_file() {
            return Err(SessionError::NotFound(session_id.to_string()));
        }
        let shared = Arc::new(SharedSession::new(Session::load(&dir, self.pipeline.clone())?));
        sessions.insert(session_id.to_string(), shared.clone());
        Ok(shared)
    }
}
