//! Dataset loading.

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset record {index}: {message}")]
    Schema { index: usize, message: String },
    #[error("could not read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset is not a JSON array: {0}")]
    Parse(String),
}

/// One question/answer example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    /// E.g. comparison, inference, compositional, bridge-comparison.
    pub question_type: Option<String>,
}

#[derive(Deserialize)]
struct RawExample {
    id: Option<String>,
    question: Option<String>,
    answer: Option<String>,
    #[serde(rename = "type")]
    question_type: Option<String>,
}

/// Parses a JSON array of `{"id","question","answer","type"?}` records.
pub fn parse_dataset(text: &str) -> Result<Vec<QAExample>, EvalError> {
    let raw: Vec<RawExample> =
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    let mut examples = Vec::with_capacity(raw.len());
    for (index, record) in raw.into_iter().enumerate() {
        let missing = |field: &str| EvalError::Schema {
            index,
            message: format!("missing or empty {field:?}"),
        };
        let id = record
            .id
            .filter(|v| !v.is_empty())
            .ok_or_else(|| missing("id"))?;
        let question = record
            .question
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| missing("question"))?;
        let gold_answer = record
            .answer
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| missing("answer"))?;
        examples.push(QAExample {
            id,
            question,
            gold_answer,
            question_type: record.question_type,
        });
    }
    Ok(examples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QAExample>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text)
}
