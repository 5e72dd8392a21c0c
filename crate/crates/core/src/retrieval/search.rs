use std::collections::BTreeSet;

use super::{bm25_score, Bm25Params, Index};
use crate::domain::{RankedList, RetrievalFilter, SubQuery};
use crate::text::tokenize;

/// Keeps the candidates admitted by `filter`, preserving their order.
/// Candidates missing from the index are dropped.
pub fn apply_filter(candidates: &[String], filter: &RetrievalFilter, index: &Index) -> Vec<String> {
    candidates
        .iter()
        .filter(|id| index.chunk(id).is_some_and(|c| filter.admits(&c.source_domain, c.published_date)))
        .cloned()
        .collect()
}

/// Top-`k` chunks for `sub` that survive `filter`, by BM25 score descending
/// with chunk_id ascending as tie-break. Only chunks sharing at least one
/// term with the query are candidates.
pub fn search(index: &Index, sub: &SubQuery, filter: &RetrievalFilter, k: usize, params: Bm25Params) -> RankedList {
    search_terms(index, &tokenize(&sub.search_text()), filter, k, params)
}

pub fn search_terms(
    index: &Index,
    terms: &[String],
    filter: &RetrievalFilter,
    k: usize,
    params: Bm25Params,
) -> RankedList {
    let candidates: Vec<String> = terms
        .iter()
        .flat_map(|t| index.postings(t).iter().map(|p| p.chunk_id.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let survivors = apply_filter(&candidates, filter, index);
    let mut scored: Vec<(String, f64)> = survivors
        .into_iter()
        .map(|id| {
            let s = bm25_score(terms, &id, index, params).expect("candidate comes from the index");
            (id, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    RankedList::from_scored(scored)
}
