use std::fmt::Write as _;

use super::AgentError;
use crate::domain::{Stage, UserProfile};
use crate::retrieval::Index;
use crate::session::SessionState;

const DECOMPOSITION: &str = "\
You are simulating a user who wants to refine a query decomposition process. Based on the provided user profile, you will review the initial sub-queries and identify necessary adjustments. You can perform the following actions:
{actions}

User Profile: {profile}
User Query: {query}
Initial Query Decomposition: {output}
Task Prompt:
Analyze the given sub-queries in light of the user profile, highlighting any necessary modifications with clear explanations. Then, generate a refined list of sub-queries that better align with the user's needs.
";

const RETRIEVAL: &str = "\
You are simulating a user who wants to refine a retrieval & ranking process. Based on the provided user profile, you will review the initial retrieved results and apply necessary adjustments. You can perform the following actions:
{actions}

User Profile: {profile}
User Query: {query}
Initial Retrieved Results: {output}
Task Prompt:
Analyze the retrieved documents in light of the user profile and context, identifying any necessary refinements with clear justifications. Then, generate a revised ranked list that best aligns with the user\u{2019}s intent.
";

const GENERATION: &str = "\
You are simulating a user who wants to refine an AI-generated answer. Based on the provided user profile, you will review the initial answer and apply necessary adjustments. You can perform the following actions:
{actions}

User Profile: {profile}
User Query: {query}
Initial Generated Answer: {output}
Task Prompt:
Analyze the generated answer in light of the user profile and query context, highlighting necessary modifications with clear justifications. Then, generate a revised answer that best aligns with the user\u{2019}s needs.
";

const OUTPUT_FORMAT: &str = "Output Format:
Reply with a JSON array of actions using the shapes listed above, e.g. [{\"kind\": \"remove_sub_query\", \"sub_id\": \"Q4\"}]. Reply with [] if no change is needed.
";

/// Allowed actions for a stage, one JSON shape per line.
pub fn action_menu(stage: Stage) -> &'static str {
    match stage {
        Stage::Decomposition => concat!(
            "- add a sub-query: {\"kind\": \"add_sub_query\", \"text\": \"...\", \"insert_position\": 0, \"constraints\": []}\n",
            "- remove a sub-query: {\"kind\": \"remove_sub_query\", \"sub_id\": \"Q1\"}\n",
            "- reorder sub-queries: {\"kind\": \"reorder_sub_queries\", \"permutation\": [\"Q2\", \"Q1\"]}\n",
            "- refine a constraint: {\"kind\": \"refine_constraint\", \"sub_id\": \"Q1\", \"key\": \"budget\", \"value\": \"...\"}",
        ),
        Stage::Retrieval => concat!(
            "- label a document: {\"kind\": \"annotate_relevance\", \"sub_id\": \"Q1\", \"chunk_id\": \"D1\", \"label\": \"relevant|partially_relevant|irrelevant\"}\n",
            "- move a document: {\"kind\": \"rerank_evidence\", \"sub_id\": \"Q1\", \"chunk_id\": \"D1\", \"new_rank\": 1}\n",
            "- filter sources: {\"kind\": \"set_filter\", \"filter\": {\"time_from\": null, \"time_to\": null, \"domain_allow\": [\"example.org\"], \"domain_block\": null}}",
        ),
        Stage::Generation => concat!(
            "- flag an incorrect section: {\"kind\": \"correct_fact\", \"section_id\": \"sec-Q1\", \"note\": \"...\"}\n",
            "- rewrite a section: {\"kind\": \"edit_section\", \"section_id\": \"sec-Q1\", \"new_text\": \"...\"}\n",
            "- change the style: {\"kind\": \"adjust_style\", \"style\": {\"tone\": \"neutral|formal|casual\", \"verbosity\": \"brief|normal|detailed\", \"layout\": \"prose|bullets\"}}",
        ),
        Stage::Final => "",
    }
}

fn render_profile(profile: &UserProfile) -> String {
    if profile.preferences.is_empty() {
        return "(no learned preferences)".into();
    }
    let mut out = String::new();
    for p in &profile.preferences {
        let _ = write!(out, "\n- {}: {} (confidence {:.2})", p.dimension, p.value, p.confidence);
    }
    out
}

fn render_output(stage: Stage, state: &SessionState, index: &Index) -> String {
    let mut out = String::new();
    match stage {
        Stage::Decomposition => {
            for q in &state.plan.sub_queries {
                let _ = write!(out, "\n{}. {}", q.sub_id, q.text);
                for c in &q.constraints {
                    let _ = write!(out, " [{}={}]", c.key, c.value);
                }
            }
        }
        Stage::Retrieval => {
            for q in &state.plan.sub_queries {
                let _ = write!(out, "\n{}. {}", q.sub_id, q.text);
                let Some(list) = state.evidence.list(&q.sub_id) else { continue };
                for e in &list.entries {
                    let (domain, text) = index
                        .chunk(&e.chunk_id)
                        .map(|c| (c.source_domain.as_str(), c.text.as_str()))
                        .unwrap_or(("?", ""));
                    let _ = write!(out, "\n  {}. [{}] ({domain}, score {:.4}) {text}", e.rank, e.chunk_id, e.score);
                    if let Some(l) = e.label {
                        let _ = write!(out, " <{}>", l.as_str());
                    }
                }
            }
        }
        Stage::Generation | Stage::Final => {
            for s in &state.answer.sections {
                let _ = write!(out, "\n[{}] {}\n{}", s.section_id, s.heading, s.text);
            }
        }
    }
    out
}

/// Fills the stage's agent prompt. Byte-stable for fixed inputs.
pub fn render_prompt(
    stage: Stage,
    profile: &UserProfile,
    state: &SessionState,
    index: &Index,
) -> Result<String, AgentError> {
    let template = match stage {
        Stage::Decomposition => DECOMPOSITION,
        Stage::Retrieval => RETRIEVAL,
        Stage::Generation => GENERATION,
        Stage::Final => return Err(AgentError::UnsupportedStage(stage.as_str().into())),
    };
    let slots = [
        ("{actions}", action_menu(stage).to_string()),
        ("{profile}", render_profile(profile)),
        ("{query}", state.query.text.clone()),
        ("{output}", render_output(stage, state, index)),
    ];
    Ok(format!("{}\n{OUTPUT_FORMAT}", fill(template, &slots)))
}

/// Single-pass substitution, so slot values are never re-scanned.
fn fill(template: &str, slots: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some((at, (name, value))) =
        slots.iter().filter_map(|s| rest.find(s.0).map(|i| (i, s))).min_by_key(|(i, _)| *i)
    {
        out.push_str(&rest[..at]);
        out.push_str(value);
        rest = &rest[at + name.len()..];
    }
    out.push_str(rest);
    out
}
