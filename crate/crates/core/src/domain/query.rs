use serde::{Deserialize, Serialize};

use super::Timestamp;

/// A natural-language request submitted by a user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserQuery {
    pub query_id: String,
    pub user_id: String,
    pub text: String,
    pub submitted_at: Timestamp,
}

impl UserQuery {
    pub fn new(
        query_id: impl Into<String>,
        user_id: impl Into<String>,
        text: impl Into<String>,
        at: Timestamp,
    ) -> Self {
        UserQuery { query_id: query_id.into(), user_id: user_id.into(), text: text.into(), submitted_at: at }
    }

    pub fn is_valid(&self) -> bool {
        !self.text.trim().is_empty()
    }
}

/// Flat key/value constraint attached to a sub-query, e.g.
/// `budget_eur_max = 150`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub key: String,
    pub value: String,
}

impl Constraint {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Constraint { key: key.into(), value: value.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    System,
    UserAdded,
    AgentSuggested,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    pub sub_id: String,
    pub text: String,
    pub constraints: Vec<Constraint>,
    pub position: usize,
    pub provenance: Provenance,
}

impl SubQuery {
    /// Text used for retrieval: the sub-query followed by its constraint
    /// values.
    pub fn search_text(&self) -> String {
        let mut text = self.text.clone();
        for c in &self.constraints {
            text.push(' ');
            text.push_str(&c.value);
        }
        text
    }
}

/// Versioned, ordered list of sub-queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub plan_version: u32,
    pub parent_version: Option<u32>,
    pub sub_queries: Vec<SubQuery>,
    /// Numeric suffix for the next allocated sub_id (`Q<n>`); ids are never
    /// reused within a session.
    pub next_sub_number: u32,
}

impl QueryPlan {
    /// Builds a version-1 plan with system provenance and ids `Q1..Qn`.
    pub fn initial<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sub_queries: Vec<SubQuery> = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| SubQuery {
                sub_id: format!("Q{}", i + 1),
                text: t.into(),
                constraints: Vec::new(),
                position: i,
                provenance: Provenance::System,
            })
            .collect();
        let next = sub_queries.len() as u32 + 1;
        QueryPlan { plan_version: 1, parent_version: None, sub_queries, next_sub_number: next }
    }

    pub fn get(&self, sub_id: &str) -> Option<&SubQuery> {
        self.sub_queries.iter().find(|s| s.sub_id == sub_id)
    }

    pub fn index_of(&self, sub_id: &str) -> Option<usize> {
        self.sub_queries.iter().position(|s| s.sub_id == sub_id)
    }

    pub fn sub_ids(&self) -> Vec<String> {
        self.sub_queries.iter().map(|s| s.sub_id.clone()).collect()
    }

    pub fn texts(&self) -> Vec<String> {
        self.sub_queries.iter().map(|s| s.text.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.sub_queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_queries.is_empty()
    }

    /// Checks position contiguity, id uniqueness, non-empty texts and
    /// version lineage.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.sub_queries.is_empty() {
            return Err("plan has no sub-queries".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, s) in self.sub_queries.iter().enumerate() {
            if s.position != i {
                return Err(format!("sub-query {} at index {i} has position {}", s.sub_id, s.position));
            }
            if !seen.insert(&s.sub_id) {
                return Err(format!("duplicate sub_id {}", s.sub_id));
            }
            if s.text.trim().is_empty() {
                return Err(format!("sub-query {} has empty text", s.sub_id));
            }
        }
        if let Some(parent) = self.parent_version {
            if self.plan_version <= parent {
                return Err("plan_version must exceed parent_version".into());
            }
        }
        Ok(())
    }

    pub(crate) fn renumber(&mut self) {
        for (i, s) in self.sub_queries.iter_mut().enumerate() {
            s.position = i;
        }
    }
}
