use sha2::{Digest, Sha256};

use super::{topic_of, Proposal, ProposalStatus};
use crate::domain::{
    domain_matches, validate_event, Action, Actor, AnswerStyle, FeedbackEvent, Layout, Preference, RetrievalFilter,
    Stage, Timestamp, UserProfile, ValidationState, Verbosity,
};
use crate::pipeline::{fill_slots, RuleDecomposer};
use crate::retrieval::Index;
use crate::session::SessionState;

/// Preferences at or below this confidence never fire a rule.
pub const RULE_THRESHOLD: f64 = 0.5;
pub const MAX_PROPOSALS: usize = 3;

const TOPIC_TEMPLATES: &[(&str, &str)] = &[
    ("sightseeing", "What are some sightseeing attractions near {subject}?"),
    ("flights", "What are the best flight options to {subject}?"),
    ("hotels", "What are the recommended hotels near {subject}?"),
    ("registration", "What is the registration process and cost for {subject}?"),
    ("venue", "Where and when will {subject} be held?"),
];

struct Candidate {
    rule_id: String,
    action: Action,
    rationale: String,
    confidence: f64,
}

fn cites(p: &Preference) -> String {
    format!("profile preference {}={} (confidence {:.2})", p.dimension, p.value, p.confidence)
}

/// Deterministic event and proposal ids derived from the proposal content.
fn digest(session_id: &str, offset: u64, rule_id: &str, action: &Action) -> String {
    let mut h = Sha256::new();
    h.update(session_id.as_bytes());
    h.update(offset.to_le_bytes());
    h.update(rule_id.as_bytes());
    h.update(serde_json::to_vec(action).expect("action serializes"));
    hex::encode(&h.finalize()[..8])
}

/// Evaluates the profile's rules against one stage of `snapshot`.
///
/// Returns at most [`MAX_PROPOSALS`], ordered by confidence then rule id.
/// Every returned event validates against `snapshot`. Stages that are not
/// clean yield nothing.
pub fn suggest_feedback(
    stage: Stage,
    snapshot: &SessionState,
    profile: &UserProfile,
    index: &Index,
    at: Timestamp,
) -> Vec<Proposal> {
    if !snapshot.is_clean() {
        return Vec::new();
    }
    let prefs: Vec<&Preference> = profile.preferences.iter().filter(|p| p.confidence > RULE_THRESHOLD).collect();
    let mut candidates = match stage {
        Stage::Decomposition => decomposition_rules(snapshot, &prefs),
        Stage::Retrieval => retrieval_rules(snapshot, &prefs, index),
        Stage::Generation => generation_rules(snapshot, &prefs),
        Stage::Final => Vec::new(),
    };
    candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.rule_id.cmp(&b.rule_id)));

    let offset = snapshot.log_offset;
    let mut out = Vec::new();
    for c in candidates {
        if out.len() == MAX_PROPOSALS {
            break;
        }
        let hash = digest(&snapshot.session_id, offset, &c.rule_id, &c.action);
        let mut event = FeedbackEvent::new(snapshot.session_id.clone(), offset + 1, Actor::ShadowAgent, at, c.action);
        event.event_id = format!("agent-{hash}");
        if let Err(r) = validate_event(&event, snapshot) {
            tracing::debug!(rule = %c.rule_id, rejection = %r, "dropping invalid proposal");
            continue;
        }
        out.push(Proposal {
            proposal_id: format!("p-{hash}"),
            session_id: snapshot.session_id.clone(),
            generated_at_offset: offset,
            rule_id: c.rule_id,
            proposed_event: event,
            rationale: c.rationale,
            confidence: c.confidence,
            status: ProposalStatus::Pending,
        });
    }
    out
}

fn subject_for(query: &str) -> String {
    RuleDecomposer::new()
        .match_query(query)
        .and_then(|m| m.slots.get("event").or_else(|| m.slots.get("place")).cloned())
        .unwrap_or_else(|| query.trim().to_string())
}

fn decomposition_rules(s: &SessionState, prefs: &[&Preference]) -> Vec<Candidate> {
    let mut out = Vec::new();
    for p in prefs.iter().filter(|p| p.dimension == "query_scope") {
        if let Some(topic) = p.value.strip_prefix("no_") {
            for sub in s.plan.sub_queries.iter().filter(|q| topic_of(&q.text) == Some(topic)) {
                out.push(Candidate {
                    rule_id: format!("scope.no_{topic}.{}", sub.sub_id),
                    action: Action::RemoveSubQuery { sub_id: sub.sub_id.clone() },
                    rationale: format!("Remove {} ({topic}): {}", sub.sub_id, cites(p)),
                    confidence: p.confidence,
                });
            }
        } else if let Some(topic) = p.value.strip_prefix("include_") {
            let present = s.plan.sub_queries.iter().any(|q| topic_of(&q.text) == Some(topic));
            let template = TOPIC_TEMPLATES.iter().find(|(t, _)| *t == topic).map(|(_, tpl)| *tpl);
            if let (false, Some(tpl)) = (present, template) {
                let slots = [("subject".to_string(), subject_for(&s.query.text))].into_iter().collect();
                out.push(Candidate {
                    rule_id: format!("scope.include_{topic}"),
                    action: Action::AddSubQuery {
                        text: fill_slots(tpl, &slots),
                        insert_position: s.plan.len(),
                        constraints: Vec::new(),
                    },
                    rationale: format!("Add a {topic} sub-query: {}", cites(p)),
                    confidence: p.confidence,
                });
            }
        }
    }
    out
}

fn evidence_has_domain(s: &SessionState, index: &Index, domain: &str) -> bool {
    s.evidence.all_chunk_ids().iter().filter_map(|id| index.chunk(id)).any(|c| domain_matches(&c.source_domain, domain))
}

fn retrieval_rules(s: &SessionState, prefs: &[&Preference], index: &Index) -> Vec<Candidate> {
    let current = s.evidence.active_filter.normalized();
    let mut out = Vec::new();
    for p in prefs {
        let d = p.value.as_str();
        let filter = match p.dimension.as_str() {
            "trusted_domain" => {
                let allow = current.domain_allow.clone().unwrap_or_default();
                if allow.iter().any(|a| a == d) || !evidence_has_domain(s, index, d) {
                    continue;
                }
                RetrievalFilter { domain_allow: Some([allow, vec![d.to_string()]].concat()), ..current.clone() }
            }
            "blocked_domain" => {
                let block = current.domain_block.clone().unwrap_or_default();
                if block.iter().any(|b| b == d) || !evidence_has_domain(s, index, d) {
                    continue;
                }
                RetrievalFilter { domain_block: Some([block, vec![d.to_string()]].concat()), ..current.clone() }
            }
            _ => continue,
        };
        let verb = if p.dimension == "trusted_domain" { "Restrict sources to" } else { "Exclude" };
        out.push(Candidate {
            rule_id: format!("{}.{d}", p.dimension),
            action: Action::SetFilter { filter: filter.normalized() },
            rationale: format!("{verb} {d}: {}", cites(p)),
            confidence: p.confidence,
        });
    }
    out
}

fn generation_rules(s: &SessionState, prefs: &[&Preference]) -> Vec<Candidate> {
    let style = s.answer.style;
    let mut out = Vec::new();
    for p in prefs {
        match p.dimension.as_str() {
            "style_layout" => {
                let layout = match p.value.as_str() {
                    "bullets" => Layout::Bullets,
                    "prose" => Layout::Prose,
                    _ => continue,
                };
                if layout != style.layout {
                    out.push(Candidate {
                        rule_id: format!("style_layout.{}", p.value),
                        action: Action::AdjustStyle { style: AnswerStyle { layout, ..style } },
                        rationale: format!("Use {} layout: {}", p.value, cites(p)),
                        confidence: p.confidence,
                    });
                }
            }
            "verbosity" => {
                let verbosity = match p.value.as_str() {
                    "brief" => Verbosity::Brief,
                    "normal" => Verbosity::Normal,
                    "detailed" => Verbosity::Detailed,
                    _ => continue,
                };
                if verbosity != style.verbosity {
                    out.push(Candidate {
                        rule_id: format!("verbosity.{}", p.value),
                        action: Action::AdjustStyle { style: AnswerStyle { verbosity, ..style } },
                        rationale: format!("Use {} answers: {}", p.value, cites(p)),
                        confidence: p.confidence,
                    });
                }
            }
            "accommodation_priority" => {
                let note = match p.value.as_str() {
                    "convenience" => "Prefer hotels within walking distance of the venue, even at a higher price.",
                    "cost" => "Prefer the cheapest hotels, even if they are farther from the venue.",
                    _ => continue,
                };
                let hotels = s.answer.sections.iter().filter(|sec| {
                    sec.validation_state == ValidationState::Fresh
                        && sec.sub_id.as_deref().and_then(|id| s.plan.get(id)).and_then(|q| topic_of(&q.text))
                            == Some("hotels")
                });
                for sec in hotels {
                    out.push(Candidate {
                        rule_id: format!("accommodation_priority.{}.{}", p.value, sec.section_id),
                        action: Action::CorrectFact { section_id: sec.section_id.clone(), note: note.to_string() },
                        rationale: format!("Revise {} for {}: {}", sec.section_id, p.value, cites(p)),
                        confidence: p.confidence,
                    });
                }
            }
            _ => {}
        }
    }
    out
}
