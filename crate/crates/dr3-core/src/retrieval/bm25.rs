//! In-memory BM25 inverted index.

use super::{Corpus, RankedResult, RetrievalError, Retriever};
use crate::trace::Passage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercases, splits on non-alphanumeric characters, and drops empty
/// tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocEntry {
    id: String,
    title: String,
    body: String,
    len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Inverted index with document frequencies and lengths. Immutable after
/// build; concurrent searches are safe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    docs: Vec<DocEntry>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_len: f64,
}

impl Bm25Index {
    /// Builds the index over title and body text. Fails on an empty
    /// corpus or duplicate ids.
    pub fn build(corpus: &Corpus) -> Result<Self, RetrievalError> {
        if corpus.docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = std::collections::HashSet::new();
        let mut docs = Vec::with_capacity(corpus.docs.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc_idx, doc) in corpus.docs.iter().enumerate() {
            if doc.id.is_empty() || !seen.insert(doc.id.clone()) {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
            let tokens = tokenize(&format!("{} {}", doc.title, doc.body));
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for token in &tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (token, tf) in counts {
                postings
                    .entry(token.to_string())
                    .or_default()
                    .push(Posting {
                        doc: doc_idx as u32,
                        tf,
                    });
            }
            docs.push(DocEntry {
                id: doc.id.clone(),
                title: doc.title.clone(),
                body: doc.body.clone(),
                len: tokens.len() as u32,
            });
        }
        let avg_len = docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64;
        Ok(Bm25Index {
            docs,
            postings,
            avg_len,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// Number of documents containing `term` (after tokenization rules).
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(&term.to_lowercase()).map_or(0, Vec::len)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        ((n - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
    }

    /// Scores every document matching at least one query token.
    /// Accumulation follows query-token order, so scores are bit-stable
    /// across runs.
    fn score_all(&self, tokens: &[String]) -> Vec<(u32, f64)> {
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokens {
            let Some(postings) = self.postings.get(token) else {
                continue;
            };
            let idf = self.idf(postings.len());
            for posting in postings {
                let dl = self.docs[posting.doc as usize].len as f64;
                let tf = posting.tf as f64;
                let tf_norm = (tf * (BM25_K1 + 1.0))
                    / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self.avg_len));
                *scores.entry(posting.doc).or_insert(0.0) += idf * tf_norm;
            }
        }
        scores.into_iter().collect()
    }

    fn to_passage(&self, doc: u32, rank: usize, score: f64) -> Passage {
        let entry = &self.docs[doc as usize];
        Passage {
            id: entry.id.clone(),
            title: entry.title.clone(),
            body: entry.body.clone(),
            rank,
            score,
        }
    }

    /// Searches a batch of queries; runs data-parallel when the `parallel`
    /// feature is enabled.
    #[cfg(feature = "parallel")]
    pub fn search_many(
        &self,
        queries: &[String],
        k: usize,
    ) -> Result<Vec<RankedResult>, RetrievalError> {
        use rayon::prelude::*;
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }

    /// Searches a batch of queries sequentially.
    #[cfg(not(feature = "parallel"))]
    pub fn search_many(
        &self,
        queries: &[String],
        k: usize,
    ) -> Result<Vec<RankedResult>, RetrievalError> {
        queries.iter().map(|q| self.search(q, k)).collect()
    }
}

impl Retriever for Bm25Index {
    fn search(&self, query: &str, k: usize) -> Result<RankedResult, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        if k == 0 {
            return Err(RetrievalError::RankOutOfRange {
                rank: 0,
                available: 0,
            });
        }
        let tokens = tokenize(query);
        let mut scored = self.score_all(&tokens);
        // Ties break by ascending passage id for deterministic rankings.
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("BM25 scores are finite")
                .then_with(|| self.docs[a.0 as usize].id.cmp(&self.docs[b.0 as usize].id))
        });
        scored.truncate(k);
        let passages = scored
            .into_iter()
            .enumerate()
            .map(|(rank, (doc, score))| self.to_passage(doc, rank, score))
            .collect();
        Ok(RankedResult {
            query: query.to_string(),
            passages,
        })
    }
}
