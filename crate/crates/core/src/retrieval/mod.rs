//! Inverted index and filtered BM25 retrieval over a local chunk corpus.

mod bm25;
mod index;
mod persist;
mod search;

pub use bm25::{bm25_score, idf, tf_saturation, Bm25Params};
pub use index::{build_index, Index, IndexStats, Posting};
pub use persist::{load_index, save_index, INDEX_FORMAT, INDEX_VERSION};
pub use search::{apply_filter, search, search_terms};

/// Default number of chunks retrieved per sub-query.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown chunk {0}")]
    UnknownChunk(String),
    #[error("index format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}
