use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, Proposal, ProposalStatus};
use crate::domain::{record, Timestamp};
use crate::session::{Session, SubmitReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Applies a decision to one pending proposal.
///
/// A proposal generated at another log offset is marked expired and
/// refused. Accepting submits the proposed event unchanged; rejecting
/// appends a rejection record and leaves the state alone. Statuses in
/// `proposals` are updated in place, including on expiry.
pub fn confirm(
    session: &mut Session,
    proposals: &mut [Proposal],
    proposal_id: &str,
    decision: Decision,
    at: Timestamp,
) -> Result<Option<SubmitReport>, AgentError> {
    let offset = session.state().log_offset;
    let p = proposals
        .iter_mut()
        .find(|p| p.proposal_id == proposal_id)
        .ok_or_else(|| AgentError::UnknownProposal(proposal_id.into()))?;
    if p.status != ProposalStatus::Pending {
        return Err(AgentError::NotPending(proposal_id.into()));
    }
    if p.generated_at_offset != offset || p.session_id != session.id() {
        p.status = ProposalStatus::Expired;
        return Err(AgentError::ExpiredProposal(proposal_id.into()));
    }
    match decision {
        Decision::Accept => {
            let report = session.submit(p.proposed_event.clone())?;
            p.status = ProposalStatus::Accepted;
            for other in proposals.iter_mut().filter(|o| o.status == ProposalStatus::Pending) {
                other.status = ProposalStatus::Expired;
            }
            Ok(Some(report))
        }
        Decision::Reject => {
            session.record_rejection(proposal_id, p.proposed_event.clone(), at)?;
            p.status = ProposalStatus::Rejected;
            Ok(None)
        }
    }
}

pub fn save_proposals(path: &Path, proposals: &[Proposal]) -> Result<(), AgentError> {
    let body: String = proposals.iter().map(|p| record::encode(p) + "\n").collect();
    record::write_atomic(path, body.as_bytes()).map_err(|e| AgentError::Io(e.to_string()))
}

/// Reads stored proposals; a missing file means none.
pub fn load_proposals(path: &Path) -> Result<Vec<Proposal>, AgentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    record::read_lines(path).map_err(|e| AgentError::Io(e.to_string()))
}
