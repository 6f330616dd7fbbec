//! The unified reformulation framework: a method registry, the shared
//! render → generate → parse → concatenate pipeline, and per-query fallback.
//!
//! Failures never abort a batch: a query whose pipeline fails (LLM error
//! after retries, searcher error, empty generation) falls back to its
//! original text with `metadata.error` set. Errors are data.

mod concat;
mod methods;
pub mod parse;
mod result;

pub use concat::{concat, ConcatStrategy};
pub use result::{MetaValue, Metadata, ReformulationResult};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use once_cell::sync::Lazy;
use thiserror::Error;

use crate::data::QueryItem;
use crate::llm::{
    CallTrace, ChatBackend, Completion, Gateway, LlmError, LlmSettings, LLMConfig,
};
use crate::prompts::{default_bank, PromptBank, PromptError, PromptTemplate};
use crate::retrieval::{extract_answers, SearchError, Searcher};

#[derive(Debug, Error)]
pub enum ReformError {
    #[error("unknown method `{name}`")]
    UnknownMethod { name: String },
    #[error("method `{name}` is already registered")]
    DuplicateRegistration { name: String },
    #[error("invalid method name `{name}` (expected [a-z][a-z0-9_]*)")]
    InvalidMethodName { name: String },
    #[error("method `{method}` requires a searcher (set params.searcher)")]
    MissingSearcher { method: String },
    #[error("invalid param `{key}`: {detail}")]
    InvalidParam { key: String, detail: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Errors a pipeline step may surface; the reformulator converts them into
/// fallback results.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Other(String),
}

/// What a method pipeline hands back to the shared concatenation step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodOutput {
    /// Expansion texts for the configured concat strategy.
    Expansions(Vec<String>),
    /// Expansions plus a per-query repeat weight (MuGI's adaptive w).
    ExpansionsWeighted {
        expansions: Vec<String>,
        query_weight: usize,
    },
    /// A fully formed reformulation, bypassing concatenation.
    Reformulated(String),
}

/// A reformulation method: renders prompts, calls the gateway, parses.
pub trait MethodPipeline: Send + Sync {
    /// Template ids the pipeline renders, resolved (and version-pinned)
    /// eagerly at construction time.
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        Vec::new()
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError>;
}

/// Method-specific parameters with documented defaults.
#[derive(Clone)]
pub struct MethodParams {
    /// Searcher handle; required for context methods (lamer, csqe).
    pub searcher: Option<Arc<dyn Searcher>>,
    /// Prompt bank; the built-in default bank when absent.
    pub bank: Option<Arc<PromptBank>>,
    pub retrieval_k: usize,
    pub gen_passages: usize,
    pub n_instructions: usize,
    pub num_questions: usize,
    pub num_docs: usize,
    pub num_answers: usize,
    /// Repeat count w for the repeat_query strategy.
    pub query_weight: usize,
    pub mugi_lambda: f64,
    /// Override of the method's default concat strategy.
    pub concat_strategy: Option<ConcatStrategy>,
    /// Version pin applied to every template the method resolves.
    pub prompt_version: Option<u32>,
    /// Per-template-id version pins; take precedence over `prompt_version`.
    pub version_pins: BTreeMap<String, u32>,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            searcher: None,
            bank: None,
            retrieval_k: 10,
            gen_passages: 5,
            n_instructions: 10,
            num_questions: 4,
            num_docs: 3,
            num_answers: 3,
            query_weight: 5,
            mugi_lambda: 0.3,
            concat_strategy: None,
            prompt_version: None,
            version_pins: BTreeMap::new(),
        }
    }
}

impl fmt::Debug for MethodParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MethodParams")
            .field("searcher", &self.searcher.as_ref().map(|_| "<searcher>"))
            .field("bank", &self.bank.as_ref().map(|_| "<bank>"))
            .field("retrieval_k", &self.retrieval_k)
            .field("gen_passages", &self.gen_passages)
            .field("n_instructions", &self.n_instructions)
            .field("num_questions", &self.num_questions)
            .field("num_docs", &self.num_docs)
            .field("num_answers", &self.num_answers)
            .field("query_weight", &self.query_weight)
            .field("mugi_lambda", &self.mugi_lambda)
            .field("concat_strategy", &self.concat_strategy)
            .field("prompt_version", &self.prompt_version)
            .field("version_pins", &self.version_pins)
            .finish()
    }
}

impl MethodParams {
    pub fn with_searcher(mut self, searcher: Arc<dyn Searcher>) -> Self {
        self.searcher = Some(searcher);
        self
    }

    pub fn with_bank(mut self, bank: Arc<PromptBank>) -> Self {
        self.bank = Some(bank);
        self
    }

    /// Sets a parameter from its string form, as supplied by `--params k=v`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ReformError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ReformError> {
            value.parse().map_err(|_| ReformError::InvalidParam {
                key: key.to_owned(),
                detail: format!("could not parse `{value}`"),
            })
        }
        match key {
            "retrieval_k" => self.retrieval_k = parse(key, value)?,
            "gen_passages" => self.gen_passages = parse(key, value)?,
            "n_instructions" | "num_keywords_sets" => self.n_instructions = parse(key, value)?,
            "num_questions" => self.num_questions = parse(key, value)?,
            "num_docs" => self.num_docs = parse(key, value)?,
            "num_answers" => self.num_answers = parse(key, value)?,
            "query_weight" | "w" => self.query_weight = parse(key, value)?,
            "mugi_lambda" => self.mugi_lambda = parse(key, value)?,
            "concat_strategy" => {
                self.concat_strategy =
                    Some(
                        value
                            .parse()
                            .map_err(|detail: String| ReformError::InvalidParam {
                                key: key.to_owned(),
                                detail,
                            })?,
                    )
            }
            "prompt_version" => self.prompt_version = Some(parse(key, value)?),
            other => {
                return Err(ReformError::InvalidParam {
                    key: other.to_owned(),
                    detail: "unknown parameter".into(),
                })
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ReformError> {
        let positives = [
            ("retrieval_k", self.retrieval_k),
            ("gen_passages", self.gen_passages),
            ("n_instructions", self.n_instructions),
            ("num_questions", self.num_questions),
            ("num_docs", self.num_docs),
            ("num_answers", self.num_answers),
        ];
        for (key, value) in positives {
            if value == 0 {
                return Err(ReformError::InvalidParam {
                    key: key.to_owned(),
                    detail: "must be >= 1".into(),
                });
            }
        }
        if !self.mugi_lambda.is_finite() || self.mugi_lambda < 0.0 {
            return Err(ReformError::InvalidParam {
                key: "mugi_lambda".to_owned(),
                detail: format!("must be a finite number >= 0, got {}", self.mugi_lambda),
            });
        }
        Ok(())
    }
}

/// Registry metadata for one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodInfo {
    pub name: String,
    pub requires_searcher: bool,
    pub default_concat: ConcatStrategy,
}

pub type MethodFactory = Arc<dyn Fn() -> Box<dyn MethodPipeline> + Send + Sync>;

struct MethodEntry {
    info: MethodInfo,
    factory: MethodFactory,
}

fn builtin_entry(
    name: &str,
    requires_searcher: bool,
    default_concat: ConcatStrategy,
    factory: MethodFactory,
) -> (String, MethodEntry) {
    (
        name.to_owned(),
        MethodEntry {
            info: MethodInfo {
                name: name.to_owned(),
                requires_searcher,
                default_concat,
            },
            factory,
        },
    )
}

static METHODS: Lazy<RwLock<BTreeMap<String, MethodEntry>>> = Lazy::new(|| {
    use ConcatStrategy::{Append, RepeatQuery, UniqueTerms};
    let entries = [
        builtin_entry("query2doc", false, RepeatQuery, Arc::new(|| {
            Box::new(methods::Query2Doc) as Box<dyn MethodPipeline>
        })),
        builtin_entry("genqr", false, UniqueTerms, Arc::new(|| {
            Box::new(methods::GenQr) as Box<dyn MethodPipeline>
        })),
        builtin_entry("genqr_ensemble", false, UniqueTerms, Arc::new(|| {
            Box::new(methods::GenQrEnsemble) as Box<dyn MethodPipeline>
        })),
        builtin_entry("query2e", false, UniqueTerms, Arc::new(|| {
            Box::new(methods::Query2E) as Box<dyn MethodPipeline>
        })),
        builtin_entry("qa_expand", false, Append, Arc::new(|| {
            Box::new(methods::QaExpand) as Box<dyn MethodPipeline>
        })),
        builtin_entry("mugi", false, RepeatQuery, Arc::new(|| {
            Box::new(methods::MuGi) as Box<dyn MethodPipeline>
        })),
        builtin_entry("lamer", true, Append, Arc::new(|| {
            Box::new(methods::LameR) as Box<dyn MethodPipeline>
        })),
        builtin_entry("csqe", true, RepeatQuery, Arc::new(|| {
            Box::new(methods::Csqe) as Box<dyn MethodPipeline>
        })),
    ];
    RwLock::new(entries.into_iter().collect())
});

fn valid_method_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) if first.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Registers a new method under `name`, making it constructible through
/// [`create_reformulator`] and visible to the CLI method listing.
pub fn register_method(
    name: &str,
    factory: MethodFactory,
    requires_searcher: bool,
    default_concat: ConcatStrategy,
) -> Result<(), ReformError> {
    if !valid_method_name(name) {
        return Err(ReformError::InvalidMethodName {
            name: name.to_owned(),
        });
    }
    let mut registry = METHODS.write().expect("method registry poisoned");
    if registry.contains_key(name) {
        return Err(ReformError::DuplicateRegistration {
            name: name.to_owned(),
        });
    }
    registry.insert(
        name.to_owned(),
        MethodEntry {
            info: MethodInfo {
                name: name.to_owned(),
                requires_searcher,
                default_concat,
            },
            factory,
        },
    );
    Ok(())
}

/// All registered methods in alphabetical order.
pub fn list_methods() -> Vec<MethodInfo> {
    METHODS
        .read()
        .expect("method registry poisoned")
        .values()
        .map(|entry| entry.info.clone())
        .collect()
}

/// Registry lookup for one method.
pub fn method_info(name: &str) -> Option<MethodInfo> {
    METHODS
        .read()
        .expect("method registry poisoned")
        .get(name)
        .map(|entry| entry.info.clone())
}

fn lookup_method(name: &str) -> Result<(MethodInfo, MethodFactory), ReformError> {
    let registry = METHODS.read().expect("method registry poisoned");
    let entry = registry
        .get(name)
        .ok_or_else(|| ReformError::UnknownMethod {
            name: name.to_owned(),
        })?;
    Ok((entry.info.clone(), Arc::clone(&entry.factory)))
}

/// A successful LLM call with the template that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedCall {
    /// `id@version` of the rendered template.
    pub template: String,
    pub template_fingerprint: String,
    pub trace: CallTrace,
}

#[derive(Default)]
struct MetaCollector {
    template_keys: Vec<String>,
    template_fingerprints: Vec<String>,
    calls: Vec<TracedCall>,
    generations: Vec<String>,
    retrieved_docids: Vec<String>,
    partial_errors: Vec<String>,
    extra: BTreeMap<String, MetaValue>,
}

/// Execution context handed to method pipelines: prompt resolution,
/// gateway calls, context retrieval, and metadata collection.
pub struct PipelineCtx<'a> {
    gateway: &'a Gateway,
    llm: &'a LLMConfig,
    bank: &'a PromptBank,
    params: &'a MethodParams,
    meta: MetaCollector,
}

fn resolve_template(
    bank: &PromptBank,
    params: &MethodParams,
    id: &str,
) -> Result<Arc<PromptTemplate>, PromptError> {
    let version = params.version_pins.get(id).copied().or(params.prompt_version);
    bank.get(id, version)
}

impl PipelineCtx<'_> {
    pub fn params(&self) -> &MethodParams {
        self.params
    }

    /// Renders `template_id` with `vars` and runs one completion call using
    /// the configured `n`.
    pub fn generate(
        &mut self,
        template_id: &str,
        vars: &BTreeMap<String, String>,
    ) -> Result<Completion, PipelineError> {
        self.generate_with_n(template_id, vars, self.llm.n)
    }

    /// Like [`PipelineCtx::generate`] with an explicit completion count.
    pub fn generate_with_n(
        &mut self,
        template_id: &str,
        vars: &BTreeMap<String, String>,
        n: u32,
    ) -> Result<Completion, PipelineError> {
        let template = resolve_template(self.bank, self.params, template_id)?;
        let key = format!("{}@{}", template.id, template.version);
        let fingerprint = template.fingerprint();
        if !self.meta.template_keys.contains(&key) {
            self.meta.template_keys.push(key.clone());
            self.meta.template_fingerprints.push(fingerprint.clone());
        }
        let rendered = template.render(vars)?;
        let mut config = self.llm.clone();
        config.n = n;
        let completion = self.gateway.complete(&rendered, &config)?;
        self.meta.calls.push(TracedCall {
            template: key,
            template_fingerprint: fingerprint,
            trace: completion.trace.clone(),
        });
        self.meta
            .generations
            .extend(completion.choices.iter().cloned());
        Ok(completion)
    }

    /// Retrieves top `retrieval_k` passage texts for `query_text`, recording
    /// the retrieved docids in the result metadata.
    pub fn retrieve_passages(&mut self, query_text: &str) -> Result<Vec<String>, PipelineError> {
        let searcher = self
            .params
            .searcher
            .as_ref()
            .ok_or_else(|| PipelineError::Other("no searcher configured".into()))?;
        let hits = searcher.search(query_text, self.params.retrieval_k)?;
        self.meta
            .retrieved_docids
            .extend(hits.iter().map(|hit| hit.docid.clone()));
        let extracted = extract_answers(&hits, searcher.answer_key())?;
        if extracted.skipped > 0 {
            self.meta.extra.insert(
                "retrieval_skipped_hits".to_owned(),
                MetaValue::Int(extracted.skipped as i64),
            );
        }
        Ok(extracted.texts)
    }

    /// Notes a non-fatal sub-step failure in the result metadata.
    pub fn note_error(&mut self, context: &str, err: &dyn fmt::Display) {
        self.meta.partial_errors.push(format!("{context}: {err}"));
    }

    /// Attaches a method-specific metadata entry.
    pub fn set_extra(&mut self, key: &str, value: MetaValue) {
        self.meta.extra.insert(key.to_owned(), value);
    }
}

/// Batch output with per-query call traces, for manifest logging.
pub struct BatchOutcome {
    pub results: Vec<ReformulationResult>,
    /// Parallel to `results`.
    pub traces: Vec<Vec<TracedCall>>,
}

/// A configured reformulation method bound to a prompt bank and a gateway.
/// Immutable after construction and safe to share across threads.
pub struct Reformulator {
    info: MethodInfo,
    pipeline: Box<dyn MethodPipeline>,
    params: MethodParams,
    llm: LLMConfig,
    gateway: Gateway,
    bank: Arc<PromptBank>,
}

impl fmt::Debug for Reformulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reformulator")
            .field("method", &self.info.name)
            .field("model", &self.llm.model)
            .finish_non_exhaustive()
    }
}

impl Reformulator {
    pub fn method(&self) -> &str {
        &self.info.name
    }

    pub fn info(&self) -> &MethodInfo {
        &self.info
    }

    pub fn llm_config(&self) -> &LLMConfig {
        &self.llm
    }

    pub fn params(&self) -> &MethodParams {
        &self.params
    }

    /// Reformulates one query. Never fails: pipeline errors produce a
    /// fallback result carrying the original text and `metadata.error`.
    pub fn reformulate(&self, query: &QueryItem) -> ReformulationResult {
        self.reformulate_traced(query).0
    }

    /// Like [`Reformulator::reformulate`], also returning the call traces.
    pub fn reformulate_traced(&self, query: &QueryItem) -> (ReformulationResult, Vec<TracedCall>) {
        let mut ctx = PipelineCtx {
            gateway: &self.gateway,
            llm: &self.llm,
            bank: &self.bank,
            params: &self.params,
            meta: MetaCollector::default(),
        };
        let outcome = self.pipeline.run(query, &mut ctx);
        let meta = ctx.meta;

        let strategy = self
            .params
            .concat_strategy
            .unwrap_or(self.info.default_concat);
        let finish = |expansions: Vec<String>, weight: usize| {
            let cleaned: Vec<String> = expansions
                .into_iter()
                .map(|e| e.trim().to_owned())
                .filter(|e| !e.is_empty())
                .collect();
            if cleaned.is_empty() {
                (
                    query.text.clone(),
                    Some("no expansions generated".to_owned()),
                    Vec::new(),
                )
            } else {
                (
                    concat(&query.text, &cleaned, strategy, weight),
                    None,
                    cleaned,
                )
            }
        };

        let (reformulated, error, expansions) = match outcome {
            Ok(MethodOutput::Reformulated(text)) => {
                if text.trim().is_empty() {
                    (
                        query.text.clone(),
                        Some("method produced an empty reformulation".to_owned()),
                        Vec::new(),
                    )
                } else {
                    (text, None, Vec::new())
                }
            }
            Ok(MethodOutput::Expansions(expansions)) => {
                finish(expansions, self.params.query_weight)
            }
            Ok(MethodOutput::ExpansionsWeighted {
                expansions,
                query_weight,
            }) => finish(expansions, query_weight),
            Err(err) => (query.text.clone(), Some(err.to_string()), Vec::new()),
        };

        let mut metadata = Metadata::new();
        metadata.insert(
            "prompt_templates".to_owned(),
            MetaValue::List(meta.template_keys),
        );
        metadata.insert(
            "prompt_fingerprints".to_owned(),
            MetaValue::List(meta.template_fingerprints),
        );
        metadata.insert(
            "llm_calls".to_owned(),
            MetaValue::List(meta.calls.iter().map(call_summary).collect()),
        );
        if !meta.generations.is_empty() {
            metadata.insert("generations".to_owned(), MetaValue::List(meta.generations));
        }
        if !meta.retrieved_docids.is_empty() {
            metadata.insert(
                "retrieved_docids".to_owned(),
                MetaValue::List(meta.retrieved_docids),
            );
        }
        if !meta.partial_errors.is_empty() {
            metadata.insert(
                "partial_errors".to_owned(),
                MetaValue::List(meta.partial_errors),
            );
        }
        if !expansions.is_empty() {
            metadata.insert("expansions".to_owned(), MetaValue::List(expansions));
        }
        for (key, value) in meta.extra {
            metadata.insert(key, value);
        }
        if let Some(error) = &error {
            metadata.insert("error".to_owned(), MetaValue::Str(error.clone()));
        }

        (
            ReformulationResult {
                qid: query.qid.clone(),
                original: query.text.clone(),
                reformulated,
                method: self.info.name.clone(),
                metadata,
            },
            meta.calls,
        )
    }

    /// Reformulates a batch, preserving input order, isolating per-item
    /// failures, and fanning out up to `max_concurrency` workers.
    pub fn reformulate_batch(&self, queries: &[QueryItem]) -> Vec<ReformulationResult> {
        self.reformulate_batch_traced(queries, None).results
    }

    /// Batch run with call traces and an optional progress callback
    /// `(completed, total)`.
    pub fn reformulate_batch_traced(
        &self,
        queries: &[QueryItem],
        progress: Option<&(dyn Fn(usize, usize) + Send + Sync)>,
    ) -> BatchOutcome {
        let total = queries.len();
        if total == 0 {
            return BatchOutcome {
                results: Vec::new(),
                traces: Vec::new(),
            };
        }
        let workers = self.llm.max_concurrency.min(total).max(1);
        let next = AtomicUsize::new(0);
        let completed = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<(ReformulationResult, Vec<TracedCall>)>>> =
            (0..total).map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= total {
                        break;
                    }
                    let outcome = self.reformulate_traced(&queries[i]);
                    *slots[i].lock().expect("batch slot poisoned") = Some(outcome);
                    let done = completed.fetch_add(1, Ordering::SeqCst) + 1;
                    if let Some(callback) = progress {
                        callback(done, total);
                    }
                });
            }
        });

        let mut results = Vec::with_capacity(total);
        let mut traces = Vec::with_capacity(total);
        for slot in slots {
            let (result, trace) = slot
                .into_inner()
                .expect("batch slot poisoned")
                .expect("every slot filled");
            results.push(result);
            traces.push(trace);
        }
        BatchOutcome { results, traces }
    }
}

fn call_summary(call: &TracedCall) -> String {
    format!(
        "template={} fingerprint={} attempts={} backend={} model={} temperature={} max_tokens={} n={} seed={}",
        call.template,
        call.trace.request_fingerprint,
        call.trace.attempt_count,
        call.trace.backend.as_str(),
        call.trace.model,
        call.trace.temperature,
        call.trace.max_tokens,
        call.trace.n,
        call.trace
            .seed
            .map_or_else(|| "none".to_owned(), |s| s.to_string()),
    )
}

fn build_reformulator(
    method: &str,
    model: &str,
    params: MethodParams,
    settings: LlmSettings,
    seed: Option<u64>,
    backend: Option<Arc<dyn ChatBackend>>,
) -> Result<Reformulator, ReformError> {
    let (info, factory) = lookup_method(method)?;
    if info.requires_searcher && params.searcher.is_none() {
        return Err(ReformError::MissingSearcher {
            method: method.to_owned(),
        });
    }
    params.validate()?;

    let mut llm = settings.into_config(model);
    if seed.is_some() {
        llm.seed = seed;
    }
    llm.validate()?;

    let bank = params.bank.clone().unwrap_or_else(default_bank);
    let pipeline = factory();
    for id in pipeline.template_ids(&params) {
        resolve_template(&bank, &params, &id)?;
    }

    let gateway = match backend {
        Some(backend) => Gateway::new(backend, llm.max_concurrency),
        None => Gateway::for_config(&llm)?,
    };

    Ok(Reformulator {
        info,
        pipeline,
        params,
        llm,
        gateway,
        bank,
    })
}

/// Builds a reformulator over the HTTP backend described by `settings`.
pub fn create_reformulator(
    method: &str,
    model: &str,
    params: MethodParams,
    settings: LlmSettings,
    seed: Option<u64>,
) -> Result<Reformulator, ReformError> {
    build_reformulator(method, model, params, settings, seed, None)
}

/// Builds a reformulator over an explicit backend (e.g. the scripted mock).
pub fn create_reformulator_with_backend(
    method: &str,
    model: &str,
    params: MethodParams,
    settings: LlmSettings,
    seed: Option<u64>,
    backend: Arc<dyn ChatBackend>,
) -> Result<Reformulator, ReformError> {
    build_reformulator(method, model, params, settings, seed, Some(backend))
}
