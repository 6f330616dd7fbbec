//! Retrieval-agnostic searcher contract with a registry, a native BM25
//! inverted-index backend, and a remote HTTP searcher adapter.
//!
//! Built-in searchers registered at startup: `bm25_local` (config: `corpus`
//! or `index` path, optional `k1`/`b`) and `http_remote` (config: `endpoint`,
//! optional `answer_key`, `timeout_secs`, `max_concurrency`).

mod bm25;
mod index_file;
mod remote;

pub use bm25::{bm25_search, build_index, tokenize, BM25Index, BM25Params, BM25Searcher};
pub use index_file::{load_index, save_index, INDEX_FORMAT_VERSION, INDEX_MAGIC};
pub use remote::RemoteSearcher;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::QueryItem;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate docid `{docid}` in corpus")]
    DuplicateDocid { docid: String },
    #[error("searcher `{name}` is already registered")]
    DuplicateRegistration { name: String },
    #[error("unknown searcher `{name}`")]
    UnknownSearcher { name: String },
    #[error("no hit carries field `{answer_key}` (misconfigured answer_key?)")]
    AllMissing { answer_key: String },
    #[error("remote searcher: {detail}")]
    Remote { detail: String },
    #[error("invalid searcher config: {key}: {detail}")]
    InvalidConfig { key: String, detail: String },
    #[error("invalid bm25 params: {detail}")]
    InvalidParams { detail: String },
    #[error("{path}: invalid index file: {detail}")]
    IndexFormat { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// A ranked retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub docid: String,
    pub score: f64,
    /// 1-based rank within the result list.
    pub rank: usize,
    /// Named content fields, e.g. `contents` and `title`.
    pub fields: BTreeMap<String, String>,
}

/// Batch retrieval output: per-query results or per-query errors, keyed by qid.
pub type BatchResults = BTreeMap<String, Result<Vec<SearchHit>, SearchError>>;

/// The searcher contract every backend satisfies.
pub trait Searcher: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError>;

    /// Per-query retrieval for a batch. A failing query yields an error entry
    /// for its qid; the batch itself never fails.
    fn batch_search(&self, queries: &[QueryItem], k: usize) -> BatchResults {
        queries
            .iter()
            .map(|query| (query.qid.clone(), self.search(&query.text, k)))
            .collect()
    }

    /// Which hit field carries passage text.
    fn answer_key(&self) -> &str {
        "contents"
    }
}

/// Passage texts pulled out of a hit list, plus how many hits lacked the field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedAnswers {
    pub texts: Vec<String>,
    pub skipped: usize,
}

/// Extracts `fields[answer_key]` from each hit in rank order. Hits lacking
/// the field are skipped and counted; all hits lacking it is an error.
pub fn extract_answers(
    hits: &[SearchHit],
    answer_key: &str,
) -> Result<ExtractedAnswers, SearchError> {
    let mut texts = Vec::with_capacity(hits.len());
    let mut skipped = 0;
    for hit in hits {
        match hit.fields.get(answer_key) {
            Some(text) => texts.push(text.clone()),
            None => skipped += 1,
        }
    }
    if texts.is_empty() && !hits.is_empty() {
        return Err(SearchError::AllMissing {
            answer_key: answer_key.to_owned(),
        });
    }
    Ok(ExtractedAnswers { texts, skipped })
}

/// Registry metadata for a searcher kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearcherBinding {
    pub name: String,
    /// Default hit field holding passage text.
    pub answer_key: String,
    pub k_default: usize,
}

/// String-keyed construction config, as supplied by CLI flags or YAML.
pub type SearcherConfig = BTreeMap<String, String>;

pub type SearcherFactory =
    Arc<dyn Fn(&SearcherConfig) -> Result<Arc<dyn Searcher>, SearchError> + Send + Sync>;

struct SearcherEntry {
    binding: SearcherBinding,
    factory: SearcherFactory,
}

static SEARCHERS: Lazy<RwLock<BTreeMap<String, SearcherEntry>>> = Lazy::new(|| {
    let mut registry = BTreeMap::new();
    registry.insert(
        "bm25_local".to_owned(),
        SearcherEntry {
            binding: SearcherBinding {
                name: "bm25_local".to_owned(),
                answer_key: "contents".to_owned(),
                k_default: 10,
            },
            factory: Arc::new(bm25::bm25_local_factory),
        },
    );
    registry.insert(
        "http_remote".to_owned(),
        SearcherEntry {
            binding: SearcherBinding {
                name: "http_remote".to_owned(),
                answer_key: "contents".to_owned(),
                k_default: 10,
            },
            factory: Arc::new(remote::http_remote_factory),
        },
    );
    RwLock::new(registry)
});

/// Registers a new searcher kind under `name` with default binding metadata.
pub fn register_searcher(name: &str, factory: SearcherFactory) -> Result<(), SearchError> {
    register_searcher_with_binding(
        SearcherBinding {
            name: name.to_owned(),
            answer_key: "contents".to_owned(),
            k_default: 10,
        },
        factory,
    )
}

pub fn register_searcher_with_binding(
    binding: SearcherBinding,
    factory: SearcherFactory,
) -> Result<(), SearchError> {
    let mut registry = SEARCHERS.write().expect("searcher registry poisoned");
    if registry.contains_key(&binding.name) {
        return Err(SearchError::DuplicateRegistration {
            name: binding.name.clone(),
        });
    }
    registry.insert(binding.name.clone(), SearcherEntry { binding, factory });
    Ok(())
}

/// Instantiates a registered searcher kind from a config map.
pub fn create_searcher(
    name: &str,
    config: &SearcherConfig,
) -> Result<Arc<dyn Searcher>, SearchError> {
    let factory = {
        let registry = SEARCHERS.read().expect("searcher registry poisoned");
        let entry = registry
            .get(name)
            .ok_or_else(|| SearchError::UnknownSearcher {
                name: name.to_owned(),
            })?;
        Arc::clone(&entry.factory)
    };
    factory(config)
}

/// Binding metadata for a registered searcher kind.
pub fn searcher_binding(name: &str) -> Option<SearcherBinding> {
    SEARCHERS
        .read()
        .expect("searcher registry poisoned")
        .get(name)
        .map(|entry| entry.binding.clone())
}
