use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::domain::DocumentChunk;
use crate::text::tokenize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub total_chunks: usize,
    pub total_tokens: u64,
    pub avg_chunk_length: f64,
    pub doc_freq: BTreeMap<String, usize>,
    pub chunk_lengths: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk_id: String,
    pub term_frequency: u32,
}

/// Immutable inverted index over a chunk corpus. Posting lists are sorted by
/// chunk_id.
#[derive(Clone, Debug, PartialEq)]
pub struct Index {
    pub(crate) postings: BTreeMap<String, Vec<Posting>>,
    pub(crate) stats: IndexStats,
    pub(crate) chunk_store: BTreeMap<String, DocumentChunk>,
}

impl Index {
    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &String> {
        self.postings.keys()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&DocumentChunk> {
        self.chunk_store.get(chunk_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &DocumentChunk> {
        self.chunk_store.values()
    }

    pub fn len(&self) -> usize {
        self.chunk_store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_store.is_empty()
    }

    pub fn term_frequency(&self, term: &str, chunk_id: &str) -> u32 {
        let list = self.postings(term);
        list.binary_search_by(|p| p.chunk_id.as_str().cmp(chunk_id)).map(|i| list[i].term_frequency).unwrap_or(0)
    }

    pub(crate) fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        chunk_store: BTreeMap<String, DocumentChunk>,
        chunk_lengths: BTreeMap<String, usize>,
    ) -> Self {
        let total_chunks = chunk_store.len();
        let total_tokens: u64 = chunk_lengths.values().map(|&l| l as u64).sum();
        let avg_chunk_length = if total_chunks == 0 { 0.0 } else { total_tokens as f64 / total_chunks as f64 };
        let doc_freq = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        Index {
            postings,
            stats: IndexStats { total_chunks, total_tokens, avg_chunk_length, doc_freq, chunk_lengths },
            chunk_store,
        }
    }
}

/// Tokenizes every chunk and builds postings plus corpus statistics.
pub fn build_index(corpus: Vec<DocumentChunk>) -> Result<Index, IndexError> {
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut chunk_store = BTreeMap::new();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut chunk_lengths = BTreeMap::new();
    for mut chunk in corpus {
        if chunk_store.contains_key(&chunk.chunk_id) {
            return Err(IndexError::DuplicateChunkId(chunk.chunk_id));
        }
        chunk.source_domain = chunk.source_domain.to_lowercase();
        let tokens = tokenize(&chunk.text);
        chunk_lengths.insert(chunk.chunk_id.clone(), tokens.len());
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, term_frequency) in tf {
            postings.entry(term).or_default().push(Posting { chunk_id: chunk.chunk_id.clone(), term_frequency });
        }
        chunk_store.insert(chunk.chunk_id.clone(), chunk);
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    }
    Ok(Index::from_parts(postings, chunk_store, chunk_lengths))
}
