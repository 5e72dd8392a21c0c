use serde_json::Value;

use super::{render_prompt, AgentError, Proposal, ProposalStatus};
use crate::domain::{validate_event, Action, Actor, FeedbackEvent, Stage, Timestamp, UserProfile};
use crate::pipeline::LlmClient;
use crate::retrieval::Index;
use crate::session::SessionState;

/// Confidence attached to model-proposed actions.
pub const LLM_CONFIDENCE: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LlmSuggestions {
    pub proposals: Vec<Proposal>,
    /// Model outputs dropped as unparseable, wrong-stage or invalid.
    pub dropped: usize,
}

/// Extracts actions from a model reply: a JSON array, or an object with an
/// `actions` array, optionally wrapped in prose or a code fence. Returns the
/// parsed actions and the number of entries that failed to parse.
pub fn parse_llm_actions(reply: &str) -> (Vec<Action>, usize) {
    let value = serde_json::from_str::<Value>(reply.trim()).ok().or_else(|| {
        let start = reply.find(['[', '{'])?;
        let end = reply.rfind([']', '}'])?;
        (end > start).then(|| serde_json::from_str(&reply[start..=end]).ok()).flatten()
    });
    let items = match value {
        Some(Value::Array(items)) => items,
        Some(Value::Object(mut o)) => match o.remove("actions") {
            Some(Value::Array(items)) => items,
            _ => return (Vec::new(), 1),
        },
        _ => return (Vec::new(), 1),
    };
    let mut actions = Vec::new();
    let mut dropped = 0;
    for item in items {
        match serde_json::from_value::<Action>(item) {
            Ok(a) => actions.push(a),
            Err(_) => dropped += 1,
        }
    }
    (actions, dropped)
}

/// Asks an external model for proposals. Every action goes through the
/// same validator as rule proposals; failures are dropped and counted.
pub fn suggest_with_llm(
    client: &dyn LlmClient,
    stage: Stage,
    snapshot: &SessionState,
    profile: &UserProfile,
    index: &Index,
    at: Timestamp,
) -> Result<LlmSuggestions, AgentError> {
    let prompt = render_prompt(stage, profile, snapshot, index)?;
    let reply = match client.complete(&prompt) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "llm backend failed");
            return Ok(LlmSuggestions { proposals: Vec::new(), dropped: 1 });
        }
    };
    let (actions, mut dropped) = parse_llm_actions(&reply);
    let offset = snapshot.log_offset;
    let mut proposals = Vec::new();
    for (i, action) in actions.into_iter().enumerate() {
        if action.stage() != stage || proposals.len() == super::MAX_PROPOSALS {
            dropped += 1;
            continue;
        }
        let event = FeedbackEvent::new(snapshot.session_id.clone(), offset + 1, Actor::ShadowAgent, at, action);
        if validate_event(&event, snapshot).is_err() {
            dropped += 1;
            continue;
        }
        proposals.push(Proposal {
            proposal_id: format!("p-llm-{offset}-{i}"),
            session_id: snapshot.session_id.clone(),
            generated_at_offset: offset,
            rule_id: "llm".into(),
            rationale: format!("Suggested by the model: {}", event.action.kind()),
            proposed_event: event,
            confidence: LLM_CONFIDENCE,
            status: ProposalStatus::Pending,
        });
    }
    Ok(LlmSuggestions { proposals, dropped })
}
