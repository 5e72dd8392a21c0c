use stagewise_core::agent::AgentError;
use stagewise_core::domain::record::RecordError;
use stagewise_core::domain::RejectCode;
use stagewise_core::offline::OfflineError;
use stagewise_core::pipeline::PipelineError;
use stagewise_core::retrieval::IndexError;
use stagewise_core::session::SessionError;
use stagewise_core::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Offline(#[from] OfflineError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl GatewayError {
    /// Machine-readable error code and HTTP status.
    pub fn classify(&self) -> (&'static str, u16) {
        match self {
            GatewayError::Session(e)
            | GatewayError::Agent(AgentError::Session(e))
            | GatewayError::Store(StoreError::Session(e)) => session_code(e),
            GatewayError::Agent(e) => match e {
                AgentError::ExpiredProposal(_) => ("expired_proposal", 409),
                AgentError::NotPending(_) => ("not_pending", 409),
                AgentError::UnknownProposal(_) => ("unknown_proposal", 404),
                AgentError::UnsupportedStage(_) => ("unsupported_stage", 400),
                AgentError::ForeignLog { .. } => ("foreign_log", 422),
                AgentError::Io(_) | AgentError::Session(_) => ("io_error", 500),
            },
            GatewayError::Store(e) => match e {
                StoreError::UnknownTemplate(_) => ("unknown_template", 404),
                StoreError::InsufficientCredits { .. } => ("insufficient_credits", 402),
                StoreError::Unpublishable(_) => ("unpublishable", 422),
                StoreError::UnresolvableReference { .. } => ("unresolvable_reference", 422),
                StoreError::AllStepsUnresolvable(_) => ("all_steps_unresolvable", 422),
                StoreError::Io(_) | StoreError::Format(_) | StoreError::Session(_) => ("store_error", 500),
            },
            GatewayError::Offline(OfflineError::EmptyWindow { .. }) => ("empty_window", 400),
            GatewayError::Offline(OfflineError::Io(_)) => ("io_error", 500),
            GatewayError::Pipeline(PipelineError::InvalidQuery(_)) => ("invalid_query", 422),
            GatewayError::Pipeline(PipelineError::Config(_)) => ("config_error", 500),
            GatewayError::Pipeline(_) => ("pipeline_error", 500),
            GatewayError::Index(_) | GatewayError::Record(_) => ("data_error", 500),
            GatewayError::BadRequest(_) => ("bad_request", 400),
            GatewayError::NotFound(_) => ("not_found", 404),
            GatewayError::Internal(_) => ("internal", 500),
        }
    }

    pub fn code(&self) -> &'static str {
        self.classify().0
    }

    pub fn status(&self) -> u16 {
        self.classify().1
    }

    /// Caller mistakes other than missing resources.
    pub fn is_validation(&self) -> bool {
        let s = self.status();
        (400..500).contains(&s) && s != 404
    }
}

fn session_code(e: &SessionError) -> (&'static str, u16) {
    match e {
        SessionError::Rejected(r) if r.code == RejectCode::StaleSequence => ("stale_sequence", 409),
        SessionError::Rejected(r) => (r.code.as_str(), 422),
        SessionError::Pipeline(PipelineError::InvalidQuery(_)) => ("invalid_query", 422),
        SessionError::NotFound(_) => ("not_found", 404),
        SessionError::AlreadyExists(_) => ("already_exists", 409),
        SessionError::InvalidId(_) => ("invalid_id", 400),
        SessionError::CorruptLog(_) | SessionError::CorruptSnapshot(_) | SessionError::VersionMismatch(_) => {
            ("corrupt_session", 500)
        }
        SessionError::Pipeline(_) => ("pipeline_error", 500),
        SessionError::Io(_) => ("io_error", 500),
    }
}
