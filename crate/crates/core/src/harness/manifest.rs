//! The run manifest: everything needed to audit and re-run an experiment
//! given the same bank, data files, and backend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BenchmarkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Timestamp plus a random suffix.
    pub run_id: String,
    pub toolkit_version: String,
    pub created_utc: String,
    /// Full config snapshot; secrets never appear (only env-var names).
    pub config: BenchmarkConfig,
    /// SHA-256 digests of the input files, per dataset.
    pub datasets: BTreeMap<String, DatasetDigest>,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDigest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels_sha256: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatus {
    Ok,
    Skipped,
}

/// The llm parameters actually used for a pair; identical across every pair
/// of one run by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEcho {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

/// One LLM call summary: parameter-free, latency and attempts only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub qid: String,
    pub template: String,
    pub template_fingerprint: String,
    pub request_fingerprint: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub dataset: String,
    pub method: String,
    pub status: PairStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub query_count: usize,
    /// Queries that fell back to their original text.
    pub failure_count: usize,
    pub duration_ms: u64,
    pub llm_echo: LlmEcho,
    /// `id@version` -> template fingerprint, for every template used.
    pub prompt_fingerprints: BTreeMap<String, String>,
    pub calls: Vec<CallRecord>,
}
