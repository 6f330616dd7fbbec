//! Prebuilt index files: `QGIX` magic, one format version byte, then the
//! serialized index and its default parameters. Incompatible files are
//! rejected loudly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BM25Index, BM25Params, SearchError};

pub const INDEX_MAGIC: &[u8; 4] = b"QGIX";
pub const INDEX_FORMAT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    params: BM25Params,
    index: BM25Index,
}

/// Writes an index (with its default search parameters) to `path`.
pub fn save_index(
    index: &BM25Index,
    params: &BM25Params,
    path: impl AsRef<Path>,
) -> Result<(), SearchError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| SearchError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(INDEX_MAGIC);
    bytes.push(INDEX_FORMAT_VERSION);
    let payload = serde_json::to_vec(&IndexFile {
        params: *params,
        index: index.clone(),
    })
    .expect("index serializes");
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|source| SearchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an index file, checking magic and format version.
pub fn load_index(path: impl AsRef<Path>) -> Result<(BM25Index, BM25Params), SearchError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| SearchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 5 || &bytes[..4] != INDEX_MAGIC {
        return Err(SearchError::IndexFormat {
            path: path.display().to_string(),
            detail: "bad magic (not a QGIX index file)".into(),
        });
    }
    if bytes[4] != INDEX_FORMAT_VERSION {
        return Err(SearchError::IndexFormat {
            path: path.display().to_string(),
            detail: format!(
                "unsupported format version {} (this build reads {})",
                bytes[4], INDEX_FORMAT_VERSION
            ),
        });
    }
    let file: IndexFile =
        serde_json::from_slice(&bytes[5..]).map_err(|err| SearchError::IndexFormat {
            path: path.display().to_string(),
            detail: err.to_string(),
        })?;
    Ok((file.index, file.params))
}
