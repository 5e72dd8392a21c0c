//! Reference decomposer: an ordered rule table of query patterns with
//! sub-query templates, an exact-query overlay for fixed traces, and an
//! identity fallback.

use std::collections::BTreeMap;

use regex::Regex;

use super::{PipelineError, MAX_SUBQUERIES};
use crate::domain::{QueryPlan, UserProfile, UserQuery};
use crate::text::tokenize;

/// Stage 1 contract.
pub trait Decomposer: Send + Sync {
    fn decompose(&self, query: &UserQuery, profile: Option<&UserProfile>) -> Result<QueryPlan, PipelineError>;
}

struct Rule {
    id: &'static str,
    pattern: Regex,
    templates: &'static [&'static str],
}

/// Result of matching a query against the rule table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleMatch {
    pub rule_id: String,
    /// Captured slot values, e.g. `event -> "SIGIR 2025"`.
    pub slots: BTreeMap<String, String>,
    pub sub_queries: Vec<String>,
}

pub const TRAVEL_EVENT_TEMPLATES: &[&str] = &[
    "What are the best flight options from [User's City] to the [conference location]?",
    "Where and when will {event} be held?",
    "What are the recommended hotels near the conference venue?",
    "What are some sightseeing attractions near the conference venue?",
];

const TRIP_TEMPLATES: &[&str] = &[
    "What are the best flight options to {place}?",
    "What are the recommended hotels in {place}?",
    "What are some sightseeing attractions in {place}?",
];

const COMPARE_TEMPLATES: &[&str] = &["What is {a}?", "What is {b}?", "How do {a} and {b} differ?"];

pub struct RuleDecomposer {
    rules: Vec<Rule>,
    overlay: BTreeMap<String, Vec<String>>,
}

impl Default for RuleDecomposer {
    fn default() -> Self {
        Self::new()
    }
}

fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

impl RuleDecomposer {
    pub fn new() -> Self {
        let tail = r"[\s.!?]*$";
        let rules = vec![
            Rule {
                id: "travel_event",
                pattern: Regex::new(&format!(r"(?i)^\s*plan\s+(?:a\s+)?trip\s+to\s+attend\s+(?P<event>.+?){tail}"))
                    .unwrap(),
                templates: TRAVEL_EVENT_TEMPLATES,
            },
            Rule {
                id: "trip",
                pattern: Regex::new(&format!(r"(?i)^\s*plan\s+(?:a\s+)?trip\s+to\s+(?P<place>.+?){tail}")).unwrap(),
                templates: TRIP_TEMPLATES,
            },
            Rule {
                id: "compare",
                pattern: Regex::new(&format!(
                    r"(?i)^\s*compare\s+(?P<a>.+?)\s+(?:and|vs\.?|versus)\s+(?P<b>.+?){tail}"
                ))
                .unwrap(),
                templates: COMPARE_TEMPLATES,
            },
        ];
        RuleDecomposer { rules, overlay: BTreeMap::new() }
    }

    /// Pins the decomposition of one exact query (compared after
    /// tokenization) to a fixed list of sub-queries.
    pub fn with_overlay(mut self, query: &str, sub_queries: Vec<String>) -> Self {
        self.overlay.insert(normalize(query), sub_queries);
        self
    }

    pub fn match_query(&self, text: &str) -> Option<RuleMatch> {
        self.rules.iter().find_map(|rule| {
            let caps = rule.pattern.captures(text)?;
            let slots: BTreeMap<String, String> = rule
                .pattern
                .capture_names()
                .flatten()
                .filter_map(|name| caps.name(name).map(|m| (name.to_string(), m.as_str().trim().to_string())))
                .collect();
            let sub_queries = rule.templates.iter().map(|t| fill_slots(t, &slots)).collect();
            Some(RuleMatch { rule_id: rule.id.to_string(), slots, sub_queries })
        })
    }
}

/// Replaces `{name}` placeholders with slot values.
pub fn fill_slots(template: &str, slots: &BTreeMap<String, String>) -> String {
    slots.iter().fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

impl Decomposer for RuleDecomposer {
    fn decompose(&self, query: &UserQuery, _profile: Option<&UserProfile>) -> Result<QueryPlan, PipelineError> {
        if !query.is_valid() {
            return Err(PipelineError::InvalidQuery("query text is empty".into()));
        }
        let mut texts = if let Some(fixed) = self.overlay.get(&normalize(&query.text)) {
            fixed.clone()
        } else if let Some(m) = self.match_query(&query.text) {
            m.sub_queries
        } else {
            vec![query.text.trim().to_string()]
        };
        texts.truncate(MAX_SUBQUERIES);
        if texts.is_empty() {
            return Err(PipelineError::DecompositionFailed("rule produced no sub-queries".into()));
        }
        Ok(QueryPlan::initial(texts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Provenance, Timestamp};

    fn q(text: &str) -> UserQuery {
        UserQuery::new("q", "u", text, Timestamp::from_millis(0).unwrap())
    }

    #[test]
    fn sigir_trip_plan() {
        let plan = RuleDecomposer::new().decompose(&q("Plan a trip to attend SIGIR 2025"), None).unwrap();
        assert_eq!(plan.sub_ids(), ["Q1", "Q2", "Q3", "Q4"]);
        assert_eq!(plan.sub_queries[1].text, "Where and when will SIGIR 2025 be held?");
        assert_eq!(plan.plan_version, 1);
        assert_eq!(plan.parent_version, None);
        assert!(plan.sub_queries.iter().all(|s| s.provenance == Provenance::System));
        plan.check_invariants().unwrap();
    }

    #[test]
    fn event_name_is_substituted() {
        // Hand-applied template for the same rule.
        let expected = [
            "What are the best flight options from [User's City] to the [conference location]?",
            "Where and when will NeurIPS 2025 be held?",
            "What are the recommended hotels near the conference venue?",
            "What are some sightseeing attractions near the conference venue?",
        ];
        let plan = RuleDecomposer::new().decompose(&q("Plan a trip to attend NeurIPS 2025."), None).unwrap();
        assert_eq!(plan.texts(), expected);
    }

    #[test]
    fn single_fact_query_is_identity() {
        let plan = RuleDecomposer::new().decompose(&q("Where will SIGIR 2025 be held?"), None).unwrap();
        assert_eq!(plan.texts(), ["Where will SIGIR 2025 be held?"]);
    }

    #[test]
    fn overlay_wins_over_rules() {
        let d = RuleDecomposer::new().with_overlay("plan a trip to attend SIGIR 2025", vec!["x".into(), "y".into()]);
        assert_eq!(d.decompose(&q("Plan a trip to attend SIGIR 2025"), None).unwrap().texts(), ["x", "y"]);
    }

    #[test]
    fn empty_query_fails() {
        assert!(RuleDecomposer::new().decompose(&q("   "), None).is_err());
    }

    #[test]
    fn compare_rule_slots() {
        let m = RuleDecomposer::new().match_query("Compare BM25 and SPLADE").unwrap();
        assert_eq!(m.rule_id, "compare");
        assert_eq!(m.sub_queries[2], "How do BM25 and SPLADE differ?");
    }
}
