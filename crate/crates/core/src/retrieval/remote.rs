//! Remote searcher adapter: POST `{endpoint}/search` with
//! `{"query": ..., "k": ...}`, expecting `{"hits": [{docid, score, fields}]}`.
//!
//! Any engine can be shimmed behind this wire format. Batch retrieval fans
//! out with a bounded worker pool (default 8) and records per-query errors
//! without aborting the batch.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::QueryItem;

use super::{BatchResults, SearchError, SearchHit, Searcher, SearcherConfig};

const DEFAULT_TIMEOUT_SECS: u64 = 30;
const DEFAULT_MAX_CONCURRENCY: usize = 8;

pub struct RemoteSearcher {
    client: reqwest::blocking::Client,
    endpoint: String,
    answer_key: String,
    max_concurrency: usize,
}

#[derive(Serialize)]
struct WireQuery<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct WireHits {
    #[serde(default)]
    hits: Vec<WireHit>,
}

#[derive(Deserialize)]
struct WireHit {
    docid: String,
    score: f64,
    #[serde(default)]
    fields: BTreeMap<String, String>,
}

impl RemoteSearcher {
    pub fn new(
        endpoint: impl Into<String>,
        answer_key: impl Into<String>,
        timeout: Duration,
        max_concurrency: usize,
    ) -> Result<Self, SearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|err| SearchError::Remote {
                detail: err.to_string(),
            })?;
        Ok(Self {
            client,
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            answer_key: answer_key.into(),
            max_concurrency: max_concurrency.max(1),
        })
    }
}

impl Searcher for RemoteSearcher {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
        let response = self
            .client
            .post(format!("{}/search", self.endpoint))
            .json(&WireQuery { query, k })
            .send()
            .map_err(|err| SearchError::Remote {
                detail: err.to_string(),
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(SearchError::Remote {
                detail: format!("HTTP {status}"),
            });
        }
        let wire: WireHits = response.json().map_err(|err| SearchError::Remote {
            detail: format!("unparseable response: {err}"),
        })?;

        let mut hits = Vec::with_capacity(wire.hits.len());
        let mut seen = std::collections::HashSet::new();
        let mut previous_score = f64::INFINITY;
        for (i, hit) in wire.hits.into_iter().enumerate() {
            if !seen.insert(hit.docid.clone()) {
                return Err(SearchError::Remote {
                    detail: format!("duplicate docid `{}` in response", hit.docid),
                });
            }
            if hit.score > previous_score {
                return Err(SearchError::Remote {
                    detail: "hit scores are not non-increasing".into(),
                });
            }
            previous_score = hit.score;
            hits.push(SearchHit {
                docid: hit.docid,
                score: hit.score,
                rank: i + 1,
                fields: hit.fields,
            });
        }
        Ok(hits)
    }

    fn batch_search(&self, queries: &[QueryItem], k: usize) -> BatchResults {
        let workers = self.max_concurrency.min(queries.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<(String, Result<Vec<SearchHit>, SearchError>)>>> =
            queries.iter().map(|_| std::sync::Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= queries.len() {
                        break;
                    }
                    let outcome = self.search(&queries[i].text, k);
                    *slots[i].lock().expect("batch slot poisoned") =
                        Some((queries[i].qid.clone(), outcome));
                });
            }
        });

        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("batch slot poisoned")
                    .expect("every slot filled")
            })
            .collect()
    }

    fn answer_key(&self) -> &str {
        &self.answer_key
    }
}

fn parse_usize(config: &SearcherConfig, key: &str) -> Result<Option<usize>, SearchError> {
    match config.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<usize>()
            .map(Some)
            .map_err(|_| SearchError::InvalidConfig {
                key: key.to_owned(),
                detail: format!("expected an integer, got `{raw}`"),
            }),
    }
}

/// Factory behind the registry's `http_remote` entry.
pub(super) fn http_remote_factory(
    config: &SearcherConfig,
) -> Result<Arc<dyn Searcher>, SearchError> {
    let endpoint = config
        .get("endpoint")
        .ok_or_else(|| SearchError::InvalidConfig {
            key: "endpoint".into(),
            detail: "http_remote needs an `endpoint` URL".into(),
        })?;
    let answer_key = config
        .get("answer_key")
        .cloned()
        .unwrap_or_else(|| "contents".to_owned());
    let timeout_secs = parse_usize(config, "timeout_secs")?
        .map(|secs| secs as u64)
        .unwrap_or(DEFAULT_TIMEOUT_SECS);
    let max_concurrency =
        parse_usize(config, "max_concurrency")?.unwrap_or(DEFAULT_MAX_CONCURRENCY);
    Ok(Arc::new(RemoteSearcher::new(
        endpoint,
        answer_key,
        Duration::from_secs(timeout_secs),
        max_concurrency,
    )?))
}
