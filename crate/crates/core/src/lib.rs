//! querygym: a toolkit for LLM-based query reformulation.
//!
//! The crate is organized around five loosely coupled layers:
//!
//! - [`data`] — domain types for queries/qrels/passages and TSV/JSONL loaders
//!   and savers.
//! - [`prompts`] — a versioned, role-formatted prompt bank with validated
//!   variable substitution and content fingerprinting.
//! - [`llm`] — a chat-completion gateway over OpenAI-compatible HTTP endpoints
//!   plus a deterministic scripted mock backend for offline runs and tests.
//! - [`retrieval`] — a retrieval-agnostic searcher contract with a registry,
//!   a native BM25 inverted-index backend, and a remote HTTP adapter.
//! - [`reform`] — the reformulation framework: method registry, concatenation
//!   strategies, and the built-in method pipelines.
//! - [`harness`] — configuration-driven benchmark orchestration with run
//!   manifests and TREC run-file emission.

pub mod data;
pub mod harness;
pub mod llm;
pub mod prompts;
pub mod reform;
pub mod retrieval;

pub(crate) mod util;

pub use data::{
    load_corpus_jsonl, load_corpus_tsv, load_queries, load_queries_jsonl, load_queries_tsv,
    load_qrels_tsv, save_queries_tsv, save_results_jsonl, CorpusDocument, DataError, QrelEntry,
    QueryItem,
};
pub use harness::{
    load_config, run_benchmark, run_benchmark_with, write_run_file, BenchError, BenchmarkConfig,
    RunHooks, RunManifest,
};
pub use llm::{
    make_mock_backend, CallTrace, ChatBackend, Completion, Gateway, LlmError, LlmSettings,
    MockBackend, MockSpec, LLMConfig,
};
pub use prompts::{
    default_bank, load_bank, PromptBank, PromptError, PromptTemplate, RenderedPrompt,
};
pub use reform::{
    create_reformulator, create_reformulator_with_backend, list_methods, register_method,
    ConcatStrategy, MetaValue, MethodParams, ReformError, ReformulationResult, Reformulator,
};
pub use retrieval::{
    bm25_search, build_index, create_searcher, extract_answers, register_searcher, tokenize,
    BM25Index, BM25Params, SearchError, SearchHit, Searcher,
};

/// Toolkit version as compiled into run manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
