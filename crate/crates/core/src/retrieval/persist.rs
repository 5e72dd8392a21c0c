//! Index file: a header record, a stats record, one record per chunk and
//! one record per posting list, all in the canonical line format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Index, IndexError, Posting};
use crate::domain::record::{self, Record};
use crate::domain::DocumentChunk;

pub const INDEX_FORMAT: &str = "stagewise-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum IndexLine {
    IndexHeader { format: String, version: u32, total_chunks: usize, total_terms: usize },
    IndexStats { total_tokens: u64, chunk_lengths: BTreeMap<String, usize> },
    DocumentChunk(DocumentChunk),
    PostingList { term: String, postings: Vec<Posting> },
}

pub fn save_index(index: &Index, path: &Path) -> Result<(), IndexError> {
    let mut lines = Vec::with_capacity(2 + index.chunk_store.len() + index.postings.len());
    lines.push(record::encode(&IndexLine::IndexHeader {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        total_chunks: index.stats.total_chunks,
        total_terms: index.postings.len(),
    }));
    lines.push(record::encode(&IndexLine::IndexStats {
        total_tokens: index.stats.total_tokens,
        chunk_lengths: index.stats.chunk_lengths.clone(),
    }));
    for c in index.chunk_store.values() {
        lines.push(record::encode(&Record::DocumentChunk(c.clone())));
    }
    for (term, postings) in &index.postings {
        lines.push(record::encode(&IndexLine::PostingList { term: term.clone(), postings: postings.clone() }));
    }
    let mut body = lines.join("\n");
    body.push('\n');
    record::write_atomic(path, body.as_bytes()).map_err(|e| IndexError::Io(e.to_string()))
}

pub fn load_index(path: &Path) -> Result<Index, IndexError> {
    let raw = std::fs::read_to_string(path).map_err(|e| IndexError::Io(e.to_string()))?;
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let parse = |l: &str| record::decode::<IndexLine>(l).map_err(|e| IndexError::Format(e.to_string()));

    let (total_chunks, total_terms) = match lines.next().map(parse).transpose()? {
        Some(IndexLine::IndexHeader { format, version, total_chunks, total_terms }) => {
            if format != INDEX_FORMAT || version != INDEX_VERSION {
                return Err(IndexError::Format(format!("unsupported index format {format}/{version}")));
            }
            (total_chunks, total_terms)
        }
        _ => return Err(IndexError::Format("missing index header".into())),
    };
    let (total_tokens, chunk_lengths) = match lines.next().map(parse).transpose()? {
        Some(IndexLine::IndexStats { total_tokens, chunk_lengths }) => (total_tokens, chunk_lengths),
        _ => return Err(IndexError::Format("missing index stats".into())),
    };

    let mut chunk_store = BTreeMap::new();
    let mut postings = BTreeMap::new();
    for line in lines {
        match parse(line)? {
            IndexLine::DocumentChunk(c) => {
                chunk_store.insert(c.chunk_id.clone(), c);
            }
            IndexLine::PostingList { term, postings: p } => {
                if p.iter().any(|x| !chunk_lengths.contains_key(&x.chunk_id) || x.term_frequency == 0) {
                    return Err(IndexError::Format(format!("posting list for `{term}` is inconsistent")));
                }
                postings.insert(term, p);
            }
            _ => return Err(IndexError::Format("unexpected header record".into())),
        }
    }
    if chunk_store.len() != total_chunks || postings.len() != total_terms {
        return Err(IndexError::Format("index file is truncated".into()));
    }
    let index = Index::from_parts(postings, chunk_store, chunk_lengths);
    if index.stats.total_tokens != total_tokens {
        return Err(IndexError::Format("token total mismatch".into()));
    }
    Ok(index)
}
