//! Trace file persistence: one JSON document per run.

use super::CodecError;
use crate::trace::{CorrectionTrace, ReasoningChain};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct TraceFile {
    #[serde(flatten)]
    chain: ReasoningChain,
    correction: Option<CorrectionTrace>,
}

/// Serializes a chain and its optional correction trace to JSON bytes.
pub fn save_trace(chain: &ReasoningChain, correction: Option<&CorrectionTrace>) -> Vec<u8> {
    let file = TraceFile {
        chain: chain.clone(),
        correction: correction.cloned(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("trace serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Parses trace JSON back into domain values, re-checking every invariant.
pub fn load_trace(bytes: &[u8]) -> Result<(ReasoningChain, Option<CorrectionTrace>), CodecError> {
    let file: TraceFile =
        serde_json::from_slice(bytes).map_err(|e| CodecError::SchemaViolation(e.to_string()))?;
    file.chain
        .validate()
        .map_err(|e| CodecError::SchemaViolation(e.to_string()))?;
    if let Some(correction) = &file.correction {
        correction
            .validate(None)
            .map_err(|e| CodecError::SchemaViolation(e.to_string()))?;
    }
    Ok((file.chain, file.correction))
}
