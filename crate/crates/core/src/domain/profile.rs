use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub dimension: String,
    pub value: String,
    pub confidence: f64,
    /// Number of observed sessions that exhibited this preference.
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub preferences: Vec<Preference>,
    /// Sessions folded into this profile; the smoothing denominator.
    pub sessions_observed: u32,
    /// Per-stage counts of past action kinds.
    pub history_digest: BTreeMap<Stage, BTreeMap<String, u64>>,
}

impl UserProfile {
    pub fn empty(user_id: impl Into<String>) -> Self {
        UserProfile {
            user_id: user_id.into(),
            preferences: Vec::new(),
            sessions_observed: 0,
            history_digest: BTreeMap::new(),
        }
    }

    pub fn preference(&self, dimension: &str, value: &str) -> Option<&Preference> {
        self.preferences.iter().find(|p| p.dimension == dimension && p.value == value)
    }

    /// Inserts or replaces a preference with an explicit confidence.
    pub fn with_preference(mut self, dimension: &str, value: &str, confidence: f64) -> Self {
        self.preferences.retain(|p| !(p.dimension == dimension && p.value == value));
        self.preferences.push(Preference { dimension: dimension.into(), value: value.into(), confidence, count: 0 });
        self.preferences.sort_by(|a, b| (&a.dimension, &a.value).cmp(&(&b.dimension, &b.value)));
        self
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.preferences {
            if !seen.insert((&p.dimension, &p.value)) {
                return Err(format!("duplicate preference {}={}", p.dimension, p.value));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(format!("confidence {} out of range", p.confidence));
            }
        }
        Ok(())
    }
}
