//! Rank-addressable passage retrieval.
//!
//! The corrector's re-solve stage needs the k-th ranked passage for a
//! fixed query, so retrievers expose both top-k search and single-rank
//! lookup. The built-in retriever is an in-memory BM25 index over a JSONL
//! corpus; an HTTP client covers external services.

mod bm25;
mod http;
mod store;

pub use bm25::{tokenize, Bm25Index, BM25_B, BM25_K1};
pub use http::HttpRetriever;
pub use store::{load_index, save_index, INDEX_MAGIC};

use crate::trace::Passage;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("query is empty")]
    EmptyQuery,
    #[error("rank {rank} out of range: only {available} result(s)")]
    RankOutOfRange { rank: usize, available: usize },
    #[error("corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("retriever http error: {0}")]
    Http(String),
    #[error("invalid retriever response: {0}")]
    InvalidResponse(String),
    #[error("index cache: {0}")]
    Cache(String),
}

/// One corpus document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub body: String,
}

/// A passage collection loaded from JSONL (`{"id","title","text"}` per
/// line).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<CorpusDoc>,
}

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

impl Corpus {
    pub fn new(docs: Vec<CorpusDoc>) -> Self {
        Corpus { docs }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RetrievalError> {
        let mut docs = Vec::new();
        for (number, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine =
                serde_json::from_str(line).map_err(|e| RetrievalError::Malformed {
                    line: number + 1,
                    message: e.to_string(),
                })?;
            docs.push(CorpusDoc {
                id: parsed.id,
                title: parsed.title,
                body: parsed.text,
            });
        }
        Ok(Corpus { docs })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }
}

/// A top-k retrieval result: passages carry consecutive ranks from 0 and
/// non-increasing scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query: String,
    pub passages: Vec<Passage>,
}

impl RankedResult {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (pos, p) in self.passages.iter().enumerate() {
            if p.rank != pos {
                return Err(RetrievalError::InvalidResponse(format!(
                    "rank {} at position {pos}",
                    p.rank
                )));
            }
            if pos > 0 && p.score > self.passages[pos - 1].score {
                return Err(RetrievalError::InvalidResponse(
                    "scores increase with rank".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Rank-addressable retrieval interface shared by the BM25 index and the
/// HTTP client.
pub trait Retriever: Send + Sync {
    /// Top-k passages for a query. Zero-match queries return an empty
    /// result, not an error.
    fn search(&self, query: &str, k: usize) -> Result<RankedResult, RetrievalError>;

    /// The passage at `rank` in the result list for `query`.
    fn passage_at(&self, query: &str, rank: usize) -> Result<Passage, RetrievalError> {
        let result = self.search(query, rank + 1)?;
        let available = result.passages.len();
        result
            .passages
            .into_iter()
            .nth(rank)
            .ok_or(RetrievalError::RankOutOfRange { rank, available })
    }
}
