use super::{LogRecord, SessionError, StageStatus};
use crate::domain::{Answer, EvidenceSet, FeedbackEvent, QueryPlan, Timestamp, UserQuery};

/// Borrowed stage outputs at one point of a log.
#[derive(Clone, Copy, Debug)]
pub struct StageView<'a> {
    pub plan: &'a QueryPlan,
    pub evidence: &'a EvidenceSet,
    pub answer: &'a Answer,
}

/// One feedback event with the outputs right before and right after it.
#[derive(Clone, Copy, Debug)]
pub struct EventStep<'a> {
    pub event: &'a FeedbackEvent,
    pub before: StageView<'a>,
    pub after: StageView<'a>,
    pub clean: bool,
}

/// Read-only walk over a log using its recorded outcomes; no pipeline
/// needed.
#[derive(Clone, Debug)]
pub struct LogView<'a> {
    pub session_id: &'a str,
    pub query: &'a UserQuery,
    pub initial: StageView<'a>,
    pub steps: Vec<EventStep<'a>>,
    pub rejections: Vec<(&'a str, &'a FeedbackEvent, Timestamp)>,
}

impl<'a> LogView<'a> {
    /// Fails on a missing bootstrap, a seq gap or an event without an
    /// outcome record.
    pub fn new(records: &'a [LogRecord]) -> Result<Self, SessionError> {
        let Some(LogRecord::Bootstrap { session_id, query, plan, evidence, answer }) = records.first() else {
            return Err(SessionError::CorruptLog("log does not start with a bootstrap record".into()));
        };
        let initial = StageView { plan, evidence, answer };
        let mut current = initial;
        let mut view = LogView { session_id, query, initial, steps: Vec::new(), rejections: Vec::new() };
        let mut pending: Option<&FeedbackEvent> = None;
        let mut offset = 0;
        for rec in &records[1..] {
            match rec {
                LogRecord::FeedbackEvent(e) => {
                    if pending.is_some() {
                        return Err(SessionError::CorruptLog(format!("event seq {} has no outcome", offset)));
                    }
                    if e.seq != offset + 1 {
                        return Err(SessionError::CorruptLog(format!("seq {} follows {offset}", e.seq)));
                    }
                    offset = e.seq;
                    pending = Some(e);
                }
                LogRecord::Outcome { seq, plan, evidence, answer, stage_status } => {
                    if *seq != offset {
                        return Err(SessionError::CorruptLog(format!("outcome for seq {seq} out of place")));
                    }
                    let after = StageView { plan, evidence, answer };
                    if let Some(event) = pending.take() {
                        let clean = stage_status.values().all(|s| *s == StageStatus::Clean);
                        view.steps.push(EventStep { event, before: current, after, clean });
                    }
                    current = after;
                }
                LogRecord::ProposalRejection { proposal_id, event, at } => {
                    view.rejections.push((proposal_id, event, *at));
                }
                LogRecord::Retry { .. } => {}
                LogRecord::Bootstrap { .. } => return Err(SessionError::CorruptLog("second bootstrap record".into())),
            }
        }
        if pending.is_some() {
            return Err(SessionError::CorruptLog(format!("event seq {offset} has no outcome")));
        }
        Ok(view)
    }

    pub fn user_id(&self) -> &str {
        &self.query.user_id
    }

    /// Outputs after the last step, or the bootstrap outputs.
    pub fn last(&self) -> StageView<'a> {
        self.steps.last().map(|s| s.after).unwrap_or(self.initial)
    }
}
