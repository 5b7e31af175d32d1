//! HTTP client for external retrieval services.
//!
//! Wire format: `GET {base}/search?q=<urlencoded>&k=<int>` returning a
//! JSON array of `{"id","title","text","score"}` objects; ranks are
//! assigned by array position.

use super::{RankedResult, RetrievalError, Retriever};
use crate::trace::Passage;
use serde::Deserialize;

#[derive(Deserialize)]
struct WireDoc {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    score: f64,
}

#[derive(Debug, Clone)]
pub struct HttpRetriever {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpRetriever {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpRetriever {
            base_url: base_url.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Retriever for HttpRetriever {
    fn search(&self, query: &str, k: usize) -> Result<RankedResult, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let url = format!("{}/search", self.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .get(url)
            .query(&[("q", query), ("k", &k.to_string())])
            .send()
            .map_err(|e| RetrievalError::Http(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| RetrievalError::Http(e.to_string()))?;
        if !status.is_success() {
            return Err(RetrievalError::Http(format!("status {status}: {text}")));
        }
        let docs: Vec<WireDoc> = serde_json::from_str(&text)
            .map_err(|e| RetrievalError::InvalidResponse(e.to_string()))?;
        let passages = docs
            .into_iter()
            .enumerate()
            .map(|(rank, d)| Passage {
                id: d.id,
                title: d.title,
                body: d.text,
                rank,
                score: d.score,
            })
            .collect();
        let result = RankedResult {
            query: query.to_string(),
            passages,
        };
        result.validate()?;
        Ok(result)
    }
}
