use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Answer, EvidenceSet, QueryPlan, RankedList, Stage, SubQuery, UserQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Clean,
    Dirty,
    Error,
}

/// Materialized session: the fold of the log up to `log_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub query: UserQuery,
    pub plan: QueryPlan,
    pub evidence: EvidenceSet,
    pub answer: Answer,
    pub stage_status: BTreeMap<Stage, StageStatus>,
    /// Seq of the last applied event; 0 right after bootstrap.
    pub log_offset: u64,
    /// Unannotated search results keyed by [`cache_key`].
    pub retrieval_cache: BTreeMap<String, RankedList>,
}

/// The three stage outputs plus their status; what must agree between two
/// sessions that went through the same edits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutputs {
    pub plan: QueryPlan,
    pub evidence: EvidenceSet,
    pub answer: Answer,
    pub stage_status: BTreeMap<Stage, StageStatus>,
}

pub(crate) fn all_clean() -> BTreeMap<Stage, StageStatus> {
    Stage::PIPELINE.iter().map(|s| (*s, StageStatus::Clean)).collect()
}

fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Cache key for one sub-query's raw results: sub_id, fingerprint of the
/// effective query text and fingerprint of the filter.
pub fn cache_key(sub: &SubQuery, filter_fingerprint: &str) -> String {
    format!("{}|{}|{}", sub.sub_id, short_hash(&sub.search_text()), filter_fingerprint)
}

impl SessionState {
    pub fn user_id(&self) -> &str {
        &self.query.user_id
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stage_status.get(&stage).copied().unwrap_or(StageStatus::Clean)
    }

    pub fn is_clean(&self) -> bool {
        Stage::PIPELINE.iter().all(|s| self.status(*s) == StageStatus::Clean)
    }

    pub fn outputs(&self) -> StageOutputs {
        StageOutputs {
            plan: self.plan.clone(),
            evidence: self.evidence.clone(),
            answer: self.answer.clone(),
            stage_status: self.stage_status.clone(),
        }
    }

    /// Canonical serialization of one stage's output.
    pub fn stage_json(&self, stage: Stage) -> serde_json::Value {
        match stage {
            Stage::Decomposition => serde_json::to_value(&self.plan),
            Stage::Retrieval => serde_json::to_value(&self.evidence),
            Stage::Generation => serde_json::to_value(&self.answer),
            Stage::Final => serde_json::to_value(self.outputs()),
        }
        .expect("stage outputs serialize")
    }

    /// Cross-artifact invariants: plan/answer shapes, evidence keys equal
    /// plan sub_ids, list ordering and citation closure.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.plan.check_invariants()?;
        self.answer.check_invariants()?;
        if !self.is_clean() {
            return Ok(());
        }
        let keys: Vec<&String> = self.evidence.per_subquery.keys().collect();
        let mut ids = self.plan.sub_ids();
        ids.sort();
        if keys != ids.iter().collect::<Vec<_>>() {
            return Err(format!("evidence keys {keys:?} differ from plan sub_ids {ids:?}"));
        }
        for (sub, list) in &self.evidence.per_subquery {
            list.check_invariants().map_err(|e| format!("{sub}: {e}"))?;
        }
        for s in &self.answer.sections {
            if let Some(c) = s.citations.iter().find(|c| !self.evidence.contains_chunk(c)) {
                return Err(format!("section {} cites {c}, which is not in the evidence", s.section_id));
            }
        }
        Ok(())
    }
}
