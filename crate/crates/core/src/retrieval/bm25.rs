//! Okapi BM25.
//!
//! score(q, c) = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|c|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//!
//! The idf form is never negative, so every matching term contributes a
//! positive amount.

use serde::{Deserialize, Serialize};

use super::{Index, IndexError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

pub fn idf(total_chunks: usize, doc_freq: usize) -> f64 {
    let n = total_chunks as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

/// Term-frequency saturation with length normalization.
pub fn tf_saturation(tf: f64, chunk_len: f64, avg_len: f64, params: Bm25Params) -> f64 {
    if tf <= 0.0 {
        return 0.0;
    }
    let ratio = if avg_len > 0.0 { chunk_len / avg_len } else { 1.0 };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * ratio))
}

/// Scores one chunk; duplicate query terms contribute once per occurrence.
pub fn bm25_score(
    query_terms: &[String],
    chunk_id: &str,
    index: &Index,
    params: Bm25Params,
) -> Result<f64, IndexError> {
    let stats = index.stats();
    let Some(&len) = stats.chunk_lengths.get(chunk_id) else {
        return Err(IndexError::UnknownChunk(chunk_id.to_string()));
    };
    let mut score = 0.0;
    for term in query_terms {
        let tf = index.term_frequency(term, chunk_id);
        if tf == 0 {
            continue;
        }
        let df = stats.doc_freq.get(term).copied().unwrap_or(0);
        score += idf(stats.total_chunks, df) * tf_saturation(tf as f64, len as f64, stats.avg_chunk_length, params);
    }
    Ok(score)
}
