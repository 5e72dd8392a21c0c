use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::time::date_or_unknown;

/// A passage-level retrieval unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub source_domain: String,
    #[serde(with = "date_or_unknown")]
    pub published_date: Option<NaiveDate>,
    pub url: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceLabel {
    Relevant,
    PartiallyRelevant,
    Irrelevant,
}

impl RelevanceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceLabel::Relevant => "relevant",
            RelevanceLabel::PartiallyRelevant => "partially_relevant",
            RelevanceLabel::Irrelevant => "irrelevant",
        }
    }
}

/// Time window and domain restrictions applied before ranking.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalFilter {
    pub time_from: Option<NaiveDate>,
    pub time_to: Option<NaiveDate>,
    pub domain_allow: Option<Vec<String>>,
    pub domain_block: Option<Vec<String>>,
}

impl RetrievalFilter {
    pub fn allow(domains: &[&str]) -> Self {
        RetrievalFilter { domain_allow: Some(domains.iter().map(|d| d.to_string()).collect()), ..Default::default() }
    }

    pub fn block(domains: &[&str]) -> Self {
        RetrievalFilter { domain_block: Some(domains.iter().map(|d| d.to_string()).collect()), ..Default::default() }
    }

    pub fn window(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Self {
        RetrievalFilter { time_from: from, time_to: to, ..Default::default() }
    }

    pub fn has_window(&self) -> bool {
        self.time_from.is_some() || self.time_to.is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized() == RetrievalFilter::default()
    }

    /// Lowercased, sorted, deduplicated domain lists; empty lists become
    /// `None`.
    pub fn normalized(&self) -> RetrievalFilter {
        fn norm(list: &Option<Vec<String>>) -> Option<Vec<String>> {
            let set: BTreeSet<String> = list
                .iter()
                .flatten()
                .map(|d| d.trim().trim_start_matches('.').to_lowercase())
                .filter(|d| !d.is_empty())
                .collect();
            (!set.is_empty()).then(|| set.into_iter().collect())
        }
        RetrievalFilter {
            time_from: self.time_from,
            time_to: self.time_to,
            domain_allow: norm(&self.domain_allow),
            domain_block: norm(&self.domain_block),
        }
    }

    /// Structural checks: ordered window, disjoint allow/block lists.
    pub fn check(&self) -> Result<(), String> {
        if let (Some(from), Some(to)) = (self.time_from, self.time_to) {
            if from > to {
                return Err(format!("time_from {from} is after time_to {to}"));
            }
        }
        let n = self.normalized();
        if let (Some(allow), Some(block)) = (&n.domain_allow, &n.domain_block) {
            if let Some(d) = allow.iter().find(|d| block.contains(d)) {
                return Err(format!("domain {d} is both allowed and blocked"));
            }
        }
        Ok(())
    }

    /// Hex digest of the canonical (normalized) serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&self.normalized()).expect("filter serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Whether a chunk with the given metadata survives this filter.
    pub fn admits(&self, source_domain: &str, published: Option<NaiveDate>) -> bool {
        if self.has_window() {
            let Some(date) = published else { return false };
            if self.time_from.is_some_and(|from| date < from) || self.time_to.is_some_and(|to| date > to) {
                return false;
            }
        }
        let domain = source_domain.to_lowercase();
        let n = self.normalized();
        if let Some(allow) = &n.domain_allow {
            if !allow.iter().any(|s| domain_matches(&domain, s)) {
                return false;
            }
        }
        if let Some(block) = &n.domain_block {
            if block.iter().any(|s| domain_matches(&domain, s)) {
                return false;
            }
        }
        true
    }
}

/// Label-aware hostname suffix match.
pub fn domain_matches(domain: &str, suffix: &str) -> bool {
    domain == suffix || domain.strip_suffix(suffix).is_some_and(|head| head.ends_with('.'))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub chunk_id: String,
    pub score: f64,
    pub rank: usize,
    pub label: Option<RelevanceLabel>,
    pub pin: Option<usize>,
}

/// Ranked chunk list for one sub-query.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

/// User annotations for one sub-query, re-applied after every retrieval.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQueryOverlay {
    pub labels: BTreeMap<String, RelevanceLabel>,
    /// chunk_id -> forced 1-based rank; ranks are distinct.
    pub pins: BTreeMap<String, usize>,
}

impl SubQueryOverlay {
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty() && self.pins.is_empty()
    }

    pub fn is_excluded(&self, chunk_id: &str) -> bool {
        self.labels.get(chunk_id) == Some(&RelevanceLabel::Irrelevant)
    }

    /// Records a label; an irrelevant label also drops any pin.
    pub fn set_label(&mut self, chunk_id: &str, label: RelevanceLabel) {
        self.labels.insert(chunk_id.to_string(), label);
        if label == RelevanceLabel::Irrelevant {
            self.pins.remove(chunk_id);
        }
    }

    /// Pins `chunk_id` at `rank`, evicting any other chunk pinned there.
    pub fn set_pin(&mut self, chunk_id: &str, rank: usize) {
        self.pins.retain(|c, r| *r != rank && c != chunk_id);
        self.pins.insert(chunk_id.to_string(), rank);
    }
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunk_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.chunk_id.clone()).collect()
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.entries.iter().any(|e| e.chunk_id == chunk_id)
    }

    pub fn rank_of(&self, chunk_id: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.chunk_id == chunk_id).map(|e| e.rank)
    }

    /// Builds an unannotated list from `(chunk_id, score)` pairs already in
    /// ranking order.
    pub fn from_scored(scored: Vec<(String, f64)>) -> Self {
        RankedList {
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (chunk_id, score))| RankedEntry { chunk_id, score, rank: i + 1, label: None, pin: None })
                .collect(),
        }
    }

    /// Applies an overlay to a list: irrelevant chunks are dropped, labels
    /// attached, and pinned chunks placed at their forced rank while the
    /// rest keep score order (score descending, chunk_id ascending).
    ///
    /// Annotations already present on `self` are ignored, so
    /// `materialize(materialize(raw, a), b) == materialize(raw, b)` whenever
    /// `b` extends `a`.
    pub fn materialize(&self, overlay: &SubQueryOverlay) -> RankedList {
        let mut pool: Vec<&RankedEntry> = self.entries.iter().filter(|e| !overlay.is_excluded(&e.chunk_id)).collect();
        pool.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));

        let total = pool.len();
        let pinned_rank = |e: &RankedEntry| overlay.pins.get(&e.chunk_id).copied();
        // Pin ranks are unique; pins past the end of the list trail the
        // unpinned entries in rank order.
        let mut in_range: Vec<(usize, &RankedEntry)> =
            pool.iter().filter_map(|e| pinned_rank(e).filter(|r| *r <= total).map(|r| (r, *e))).collect();
        in_range.sort_by_key(|(r, _)| *r);
        let mut overflow: Vec<(usize, &RankedEntry)> =
            pool.iter().filter_map(|e| pinned_rank(e).filter(|r| *r > total).map(|r| (r, *e))).collect();
        overflow.sort_by_key(|(r, _)| *r);
        let mut rest =
            pool.iter().filter(|e| pinned_rank(e).is_none()).copied().chain(overflow.into_iter().map(|(_, e)| e));
        let mut in_range = in_range.into_iter().peekable();

        let mut ordered: Vec<&RankedEntry> = Vec::with_capacity(total);
        for pos in 1..=total {
            match in_range.next_if(|(r, _)| *r == pos) {
                Some((_, e)) => ordered.push(e),
                None => ordered.extend(rest.next()),
            }
        }
        debug_assert_eq!(ordered.len(), total);

        RankedList {
            entries: ordered
                .into_iter()
                .enumerate()
                .map(|(i, e)| RankedEntry {
                    chunk_id: e.chunk_id.clone(),
                    score: e.score,
                    rank: i + 1,
                    label: overlay.labels.get(&e.chunk_id).copied(),
                    pin: overlay.pins.get(&e.chunk_id).copied(),
                })
                .collect(),
        }
    }

    /// Rank contiguity and unpinned score ordering.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(format!("entry {} has rank {} at index {i}", e.chunk_id, e.rank));
            }
            if e.score < 0.0 || e.score.is_nan() {
                return Err(format!("entry {} has invalid score {}", e.chunk_id, e.score));
            }
            if let Some(p) = e.pin {
                if p <= self.entries.len() && p != e.rank {
                    return Err(format!("entry {} pinned at {p} but ranked {}", e.chunk_id, e.rank));
                }
            }
        }
        let unpinned: Vec<&RankedEntry> = self.entries.iter().filter(|e| e.pin.is_none()).collect();
        for w in unpinned.windows(2) {
            let ordered = w[0].score > w[1].score || (w[0].score == w[1].score && w[0].chunk_id < w[1].chunk_id);
            if !ordered {
                return Err(format!("unpinned entries {} and {} out of order", w[0].chunk_id, w[1].chunk_id));
            }
        }
        Ok(())
    }
}

/// Per-sub-query evidence for the current plan.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub per_subquery: BTreeMap<String, RankedList>,
    pub active_filter: RetrievalFilter,
    pub overlays: BTreeMap<String, SubQueryOverlay>,
    /// Sub-queries whose list no longer reflects `active_filter`.
    pub stale: BTreeSet<String>,
}

impl EvidenceSet {
    pub fn list(&self, sub_id: &str) -> Option<&RankedList> {
        self.per_subquery.get(sub_id)
    }

    pub fn overlay(&self, sub_id: &str) -> SubQueryOverlay {
        self.overlays.get(sub_id).cloned().unwrap_or_default()
    }

    /// Every chunk id in any list.
    pub fn all_chunk_ids(&self) -> BTreeSet<String> {
        self.per_subquery.values().flat_map(|l| l.entries.iter().map(|e| e.chunk_id.clone())).collect()
    }

    pub fn contains_chunk(&self, chunk_id: &str) -> bool {
        self.per_subquery.values().any(|l| l.contains(chunk_id))
    }

    pub fn is_degenerate(&self) -> bool {
        self.per_subquery.values().all(|l| l.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(ids: &[(&str, f64)]) -> RankedList {
        RankedList::from_scored(ids.iter().map(|(c, s)| (c.to_string(), *s)).collect())
    }

    #[test]
    fn domain_suffix_is_label_aware() {
        assert!(domain_matches("sigir.org", "sigir.org"));
        assert!(domain_matches("www.sigir.org", "sigir.org"));
        assert!(!domain_matches("notsigir.org", "sigir.org"));
    }

    #[test]
    fn unknown_date_only_passes_without_window() {
        let none = RetrievalFilter::default();
        assert!(none.admits("a.com", None));
        let w = RetrievalFilter::window(NaiveDate::from_ymd_opt(2024, 1, 1), None);
        assert!(!w.admits("a.com", None));
        assert!(w.admits("a.com", NaiveDate::from_ymd_opt(2024, 1, 1)));
        assert!(!w.admits("a.com", NaiveDate::from_ymd_opt(2023, 12, 31)));
    }

    #[test]
    fn filter_check_rejects_overlap_and_inverted_window() {
        let mut f = RetrievalFilter::allow(&["a.com"]);
        f.domain_block = Some(vec!["A.com".into()]);
        assert!(f.check().is_err());
        let w = RetrievalFilter::window(NaiveDate::from_ymd_opt(2025, 1, 2), NaiveDate::from_ymd_opt(2025, 1, 1));
        assert!(w.check().is_err());
    }

    #[test]
    fn fingerprint_ignores_list_order_and_case() {
        let a = RetrievalFilter::allow(&["b.org", "A.org"]);
        let b = RetrievalFilter::allow(&["a.org", "b.org", "a.org"]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), RetrievalFilter::default().fingerprint());
    }

    #[test]
    fn pin_reflows_others_in_score_order() {
        let list = raw(&[("D1", 3.0), ("D2", 2.0), ("D3", 1.0)]);
        let mut o = SubQueryOverlay::default();
        o.set_pin("D2", 1);
        assert_eq!(list.materialize(&o).chunk_ids(), ["D2", "D1", "D3"]);
        o.set_label("D3", RelevanceLabel::Irrelevant);
        let m = list.materialize(&o);
        assert_eq!(m.chunk_ids(), ["D2", "D1"]);
        m.check_invariants().unwrap();
    }

    #[test]
    fn pin_at_current_rank_is_a_no_op() {
        let list = raw(&[("D1", 3.0), ("D2", 2.0), ("D3", 1.0)]);
        let mut o = SubQueryOverlay::default();
        o.set_pin("D2", 2);
        assert_eq!(list.materialize(&o).chunk_ids(), list.chunk_ids());
    }

    #[test]
    fn out_of_range_pin_goes_last() {
        let list = raw(&[("D1", 3.0), ("D2", 2.0)]);
        let mut o = SubQueryOverlay::default();
        o.set_pin("D1", 5);
        assert_eq!(list.materialize(&o).chunk_ids(), ["D2", "D1"]);
    }

    #[test]
    fn out_of_range_pin_does_not_displace_in_range_pin() {
        let list = raw(&[("D1", 4.0), ("D2", 3.0), ("D3", 2.0), ("D4", 1.0)]);
        let mut o = SubQueryOverlay::default();
        o.set_pin("D3", 4);
        o.set_pin("D4", 6);
        let m = list.materialize(&o);
        assert_eq!(m.chunk_ids(), ["D1", "D2", "D4", "D3"]);
        m.check_invariants().unwrap();
    }

    #[test]
    fn new_pin_evicts_previous_pin_at_same_rank() {
        let mut o = SubQueryOverlay::default();
        o.set_pin("D1", 1);
        o.set_pin("D2", 1);
        assert_eq!(o.pins.len(), 1);
        assert_eq!(o.pins.get("D2"), Some(&1));
    }
}
