//! Configuration-driven benchmark orchestration.
//!
//! Pairs (dataset × method) execute sequentially in config order with an
//! identical llm configuration and seed, writing retrieval-ready TSV and
//! structured JSONL outputs per pair, optional TREC run files, and a run
//! manifest last. A pair-level failure (e.g. an unreadable dataset) is
//! recorded and skipped; only an unwritable output dir or a totally invalid
//! config is fatal.

mod manifest;
mod runfile;

pub use manifest::{CallRecord, DatasetDigest, LlmEcho, PairRecord, PairStatus, RunManifest};
pub use runfile::{format_run_line, write_run_file};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{load_queries, save_queries_tsv, save_results_jsonl, DataError, QueryItem};
use crate::llm::{ChatBackend, LlmError, LLMConfig};
use crate::prompts::{load_bank, PromptBank, PromptError};
use crate::reform::{
    create_reformulator, create_reformulator_with_backend, method_info, MethodParams, ReformError,
    Reformulator,
};
use crate::retrieval::{searcher_binding, create_searcher, SearchError, Searcher, SearcherConfig};
use crate::util::sha256_hex;

const STALE_LOCK: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {field}: {detail}")]
    Schema { field: String, detail: String },
    #[error("unknown method `{name}`")]
    UnknownMethod { name: String },
    #[error("method `{method}` requires retrieval config (context method)")]
    MissingRetrievalConfig { method: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output dir is locked: {detail}")]
    Locked { detail: String },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Reform(#[from] ReformError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub queries: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Registered searcher name, e.g. `bm25_local` or `http_remote`.
    pub searcher: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_concurrency: Option<usize>,
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    /// Extra string options for custom registered searchers.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
}

fn default_retrieval_k() -> usize {
    10
}

impl RetrievalConfig {
    /// Flattens the typed fields into the registry's string config map.
    pub fn searcher_config(&self) -> SearcherConfig {
        let mut map = self.options.clone();
        if let Some(index) = &self.index {
            map.insert("index".into(), index.display().to_string());
        }
        if let Some(corpus) = &self.corpus {
            map.insert("corpus".into(), corpus.display().to_string());
        }
        if let Some(endpoint) = &self.endpoint {
            map.insert("endpoint".into(), endpoint.clone());
        }
        if let Some(k1) = self.k1 {
            map.insert("k1".into(), k1.to_string());
        }
        if let Some(b) = self.b {
            map.insert("b".into(), b.to_string());
        }
        if let Some(answer_key) = &self.answer_key {
            map.insert("answer_key".into(), answer_key.clone());
        }
        if let Some(timeout_secs) = self.timeout_secs {
            map.insert("timeout_secs".into(), timeout_secs.to_string());
        }
        if let Some(max_concurrency) = self.max_concurrency {
            map.insert("max_concurrency".into(), max_concurrency.to_string());
        }
        map
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
    /// Per-template version pins, e.g. `{ csqe.extract: 2 }`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub versions: BTreeMap<String, u32>,
}

fn default_context_methods() -> BTreeSet<String> {
    BTreeSet::from(["lamer".to_owned(), "csqe".to_owned()])
}

fn default_run_k() -> usize {
    1000
}

fn default_run_tag() -> String {
    "querygym".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetConfig>,
    pub methods: Vec<String>,
    /// Methods that receive the shared searcher.
    #[serde(default = "default_context_methods")]
    pub context_methods: BTreeSet<String>,
    pub llm: LLMConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PromptsConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_run_files: bool,
    #[serde(default = "default_run_k")]
    pub run_k: usize,
    #[serde(default = "default_run_tag")]
    pub run_tag: String,
}

impl BenchmarkConfig {
    /// Methods that must be given a searcher: the configured context set
    /// plus anything the registry marks as requiring one.
    pub fn effective_context_methods(&self) -> BTreeSet<String> {
        let mut set = self.context_methods.clone();
        for name in &self.methods {
            if method_info(name).is_some_and(|info| info.requires_searcher) {
                set.insert(name.clone());
            }
        }
        set
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let mut names = BTreeSet::new();
        for dataset in &self.datasets {
            if !names.insert(&dataset.name) {
                return Err(BenchError::Schema {
                    field: "datasets".into(),
                    detail: format!("duplicate dataset name `{}`", dataset.name),
                });
            }
        }
        for method in &self.methods {
            if method_info(method).is_none() {
                return Err(BenchError::UnknownMethod {
                    name: method.clone(),
                });
            }
        }
        self.llm.validate().map_err(|err| match err {
            LlmError::InvalidConfig { field, detail } => BenchError::Schema {
                field: format!("llm.{field}"),
                detail,
            },
            other => BenchError::Llm(other),
        })?;
        let context = self.effective_context_methods();
        for method in &self.methods {
            if context.contains(method) && self.retrieval.is_none() {
                return Err(BenchError::MissingRetrievalConfig {
                    method: method.clone(),
                });
            }
        }
        if let Some(retrieval) = &self.retrieval {
            if searcher_binding(&retrieval.searcher).is_none() {
                return Err(BenchError::Schema {
                    field: "retrieval.searcher".into(),
                    detail: format!("unknown searcher `{}`", retrieval.searcher),
                });
            }
            if retrieval.retrieval_k == 0 {
                return Err(BenchError::Schema {
                    field: "retrieval.retrieval_k".into(),
                    detail: "must be >= 1".into(),
                });
            }
        }
        if self.emit_run_files {
            if self.retrieval.is_none() {
                return Err(BenchError::Schema {
                    field: "emit_run_files".into(),
                    detail: "run files need a retrieval section".into(),
                });
            }
            if self.run_k == 0 {
                return Err(BenchError::Schema {
                    field: "run_k".into(),
                    detail: "must be >= 1".into(),
                });
            }
        }
        Ok(())
    }
}

/// Loads and validates a YAML benchmark config, filling defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<BenchmarkConfig, BenchError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let deserializer = serde_yaml::Deserializer::from_str(&content);
    let config: BenchmarkConfig =
        serde_path_to_error::deserialize(deserializer).map_err(|err| {
            let field = err.path().to_string();
            BenchError::Schema {
                field: if field == "." { "<root>".into() } else { field },
                detail: err.into_inner().to_string(),
            }
        })?;
    config.validate()?;
    Ok(config)
}

/// Injection points for offline runs and progress reporting.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Replacement chat backend (e.g. the scripted mock).
    pub backend: Option<Arc<dyn ChatBackend>>,
    /// Called once per pair-level event with a printable line.
    pub progress: Option<Box<dyn FnMut(&str) + 'a>>,
}

struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    fn acquire(dir: &Path) -> Result<(Self, Option<String>), BenchError> {
        let path = dir.join(".lock");
        let mut warning = None;
        if let Ok(meta) = fs::metadata(&path) {
            let age = meta
                .modified()
                .ok()
                .and_then(|modified| modified.elapsed().ok());
            match age {
                Some(age) if age > STALE_LOCK => {
                    warning = Some(format!(
                        "warning: overriding stale lock {} (age {}h)",
                        path.display(),
                        age.as_secs() / 3600
                    ));
                }
                _ => {
                    return Err(BenchError::Locked {
                        detail: format!(
                            "{} exists; another run owns this output dir (stale after 24h)",
                            path.display()
                        ),
                    });
                }
            }
        }
        fs::write(&path, format!("pid={}\n", std::process::id())).map_err(|source| {
            BenchError::Io {
                path: path.display().to_string(),
                source,
            }
        })?;
        Ok((Self { path }, warning))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn generate_run_id() -> String {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let suffix: u32 = rand::rng().random();
    format!("{stamp}-{suffix:08x}")
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|bytes| sha256_hex(&bytes))
}

fn llm_echo(config: &LLMConfig) -> LlmEcho {
    LlmEcho {
        model: config.model.clone(),
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        seed: config.seed,
    }
}

/// Runs the benchmark over the HTTP backend.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RunManifest, BenchError> {
    run_benchmark_with(config, RunHooks::default())
}

/// Runs the benchmark with injected hooks (mock backend, progress lines).
pub fn run_benchmark_with(
    config: &BenchmarkConfig,
    mut hooks: RunHooks<'_>,
) -> Result<RunManifest, BenchError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|source| BenchError::Io {
        path: config.output_dir.display().to_string(),
        source,
    })?;
    let (lock, lock_warning) = OutputLock::acquire(&config.output_dir)?;
    if let (Some(progress), Some(warning)) = (hooks.progress.as_mut(), lock_warning) {
        progress(&warning);
    }

    let searcher: Option<Arc<dyn Searcher>> = match &config.retrieval {
        Some(retrieval) => Some(create_searcher(
            &retrieval.searcher,
            &retrieval.searcher_config(),
        )?),
        None => None,
    };
    let bank: Option<Arc<PromptBank>> = match config.prompts.as_ref().and_then(|p| p.bank.as_ref())
    {
        Some(path) => Some(Arc::new(load_bank(path)?)),
        None => None,
    };

    let mut datasets = BTreeMap::new();
    let mut pairs = Vec::new();

    for dataset in &config.datasets {
        datasets.insert(
            dataset.name.clone(),
            DatasetDigest {
                queries_sha256: file_digest(&dataset.queries),
                qrels_sha256: dataset.qrels.as_deref().and_then(file_digest),
            },
        );

        let queries = match load_queries(&dataset.queries) {
            Ok(queries) => queries,
            Err(err) => {
                for method in &config.methods {
                    let record = skipped_pair(config, dataset, method, err.to_string());
                    if let Some(progress) = hooks.progress.as_mut() {
                        progress(&format!(
                            "{} x {}: skipped ({})",
                            dataset.name, method, err
                        ));
                    }
                    pairs.push(record);
                }
                continue;
            }
        };

        for method in &config.methods {
            let started = Instant::now();
            let record = run_pair(
                config,
                dataset,
                method,
                &queries,
                searcher.as_ref(),
                bank.as_ref(),
                hooks.backend.as_ref(),
                started,
            )?;
            if let Some(progress) = hooks.progress.as_mut() {
                match record.status {
                    PairStatus::Ok => progress(&format!(
                        "{} x {}: {} queries, {} fallbacks, {} ms",
                        dataset.name,
                        method,
                        record.query_count,
                        record.failure_count,
                        record.duration_ms
                    )),
                    PairStatus::Skipped => progress(&format!(
                        "{} x {}: skipped ({})",
                        dataset.name,
                        method,
                        record.error.as_deref().unwrap_or("unknown")
                    )),
                }
            }
            pairs.push(record);
        }
    }

    let manifest = RunManifest {
        run_id: generate_run_id(),
        toolkit_version: crate::TOOLKIT_VERSION.to_owned(),
        created_utc: chrono::Utc::now().to_rfc3339(),
        config: config.clone(),
        datasets,
        pairs,
    };
    let manifest_path = config.output_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|source| BenchError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;

    drop(lock);
    Ok(manifest)
}

fn skipped_pair(
    config: &BenchmarkConfig,
    dataset: &DatasetConfig,
    method: &str,
    error: String,
) -> PairRecord {
    PairRecord {
        dataset: dataset.name.clone(),
        method: method.to_owned(),
        status: PairStatus::Skipped,
        error: Some(error),
        query_count: 0,
        failure_count: 0,
        duration_ms: 0,
        llm_echo: llm_echo(&config.llm),
        prompt_fingerprints: BTreeMap::new(),
        calls: Vec::new(),
    }
}

fn build_pair_reformulator(
    config: &BenchmarkConfig,
    method: &str,
    searcher: Option<&Arc<dyn Searcher>>,
    bank: Option<&Arc<PromptBank>>,
    backend: Option<&Arc<dyn ChatBackend>>,
) -> Result<Reformulator, ReformError> {
    let mut params = MethodParams::default();
    if let Some(retrieval) = &config.retrieval {
        params.retrieval_k = retrieval.retrieval_k;
    }
    if config.effective_context_methods().contains(method) {
        params.searcher = searcher.cloned();
    }
    if let Some(bank) = bank {
        params.bank = Some(Arc::clone(bank));
    }
    if let Some(prompts) = &config.prompts {
        params.version_pins = prompts.versions.clone();
    }
    let settings = config.llm.settings();
    match backend {
        Some(backend) => create_reformulator_with_backend(
            method,
            &config.llm.model,
            params,
            settings,
            config.llm.seed,
            Arc::clone(backend),
        ),
        None => create_reformulator(method, &config.llm.model, params, settings, config.llm.seed),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_pair(
    config: &BenchmarkConfig,
    dataset: &DatasetConfig,
    method: &str,
    queries: &[QueryItem],
    searcher: Option<&Arc<dyn Searcher>>,
    bank: Option<&Arc<PromptBank>>,
    backend: Option<&Arc<dyn ChatBackend>>,
    started: Instant,
) -> Result<PairRecord, BenchError> {
    let reformulator = match build_pair_reformulator(config, method, searcher, bank, backend) {
        Ok(reformulator) => reformulator,
        Err(err) => return Ok(skipped_pair(config, dataset, method, err.to_string())),
    };

    let outcome = reformulator.reformulate_batch_traced(queries, None);
    let dataset_dir = config.output_dir.join(&dataset.name);

    let reformulated: Vec<QueryItem> = outcome
        .results
        .iter()
        .map(|result| QueryItem::new(result.qid.clone(), result.reformulated.clone()))
        .collect();
    save_queries_tsv(&reformulated, dataset_dir.join(format!("{method}.tsv")))?;
    save_results_jsonl(&outcome.results, dataset_dir.join(format!("{method}.jsonl")))?;

    if config.emit_run_files {
        let searcher = searcher.expect("emit_run_files validated against retrieval config");
        let mut entries = Vec::with_capacity(reformulated.len());
        for item in &reformulated {
            let hits = searcher.search(&item.text, config.run_k).unwrap_or_default();
            entries.push((item.qid.clone(), hits));
        }
        write_run_file(
            &entries,
            dataset_dir.join(format!("{method}.run")),
            &config.run_tag,
        )?;
    }

    let mut prompt_fingerprints = BTreeMap::new();
    let mut calls = Vec::new();
    for (result, traces) in outcome.results.iter().zip(&outcome.traces) {
        for call in traces {
            prompt_fingerprints.insert(call.template.clone(), call.template_fingerprint.clone());
            calls.push(CallRecord {
                qid: result.qid.clone(),
                template: call.template.clone(),
                template_fingerprint: call.template_fingerprint.clone(),
                request_fingerprint: call.trace.request_fingerprint.clone(),
                attempts: call.trace.attempt_count,
                latency_ms: call.trace.latency_ms,
                backend: call.trace.backend.as_str().to_owned(),
            });
        }
    }
    let failure_count = outcome
        .results
        .iter()
        .filter(|result| result.is_fallback())
        .count();

    Ok(PairRecord {
        dataset: dataset.name.clone(),
        method: method.to_owned(),
        status: PairStatus::Ok,
        error: None,
        query_count: queries.len(),
        failure_count,
        duration_ms: started.elapsed().as_millis() as u64,
        llm_echo: llm_echo(reformulator.llm_config()),
        prompt_fingerprints,
        calls,
    })
}
