//! Index cache persistence: a versioned magic header followed by the
//! serialized index.

use super::{Bm25Index, RetrievalError};
use std::io::{Read, Write};
use std::path::Path;

/// Version header written at the start of every index cache file.
pub const INDEX_MAGIC: &[u8; 8] = b"DR3IDX1\n";

pub fn save_index(index: &Bm25Index, path: &Path) -> Result<(), RetrievalError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(INDEX_MAGIC)?;
    let payload = serde_json::to_vec(index).map_err(|e| RetrievalError::Cache(e.to_string()))?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Bm25Index, RetrievalError> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| RetrievalError::Cache("file too short for header".into()))?;
    if &magic != INDEX_MAGIC {
        return Err(RetrievalError::Cache(format!(
            "bad header {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(INDEX_MAGIC)
        )));
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    serde_json::from_slice(&payload).map_err(|e| RetrievalError::Cache(e.to_string()))
}
