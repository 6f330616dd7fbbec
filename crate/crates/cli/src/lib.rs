//! The `querygym` command line: method listing, prompt inspection, query
//! reformulation, index building and search, and benchmark orchestration.
//!
//! Exit status convention: 0 success, 1 usage error, 2 data/config error,
//! 3 backend (LLM/searcher) error after retries.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use querygym::data::{
    load_corpus, load_queries, sanitize_tsv_field, save_queries_tsv, save_results_jsonl,
    DataError, QueryItem,
};
use querygym::harness::{format_run_line, load_config, run_benchmark_with, BenchError, RunHooks};
use querygym::llm::{make_mock_backend, ChatBackend, LlmError, LlmSettings, MockSpec};
use querygym::prompts::{default_bank, load_bank, PromptBank, PromptError};
use querygym::reform::{
    create_reformulator, create_reformulator_with_backend, list_methods, method_info,
    MethodParams, ReformError, Reformulator,
};
use querygym::retrieval::{
    bm25_search, build_index, create_searcher, load_index, save_index, BM25Params, SearchError,
    SearcherConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Parser)]
#[command(
    name = "querygym",
    version,
    about = "LLM-based query reformulation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered reformulation methods
    Methods,
    /// Inspect prompt bank templates
    Prompts {
        #[command(subcommand)]
        action: PromptsAction,
    },
    /// Reformulate a query file with one method
    Reformulate(ReformulateArgs),
    /// Build a local BM25 index
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Search a local BM25 index, emitting TREC run lines
    Search(SearchArgs),
    /// Run a multi-method, multi-dataset benchmark config
    Benchmark(BenchmarkArgs),
}

#[derive(Subcommand)]
enum PromptsAction {
    /// List templates as (id, version, method, description) rows
    List {
        /// Only templates owned by this method
        #[arg(long)]
        method: Option<String>,
        /// Custom bank file or directory (default: built-in bank)
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Print one template in full
    Show {
        id: String,
        #[arg(long)]
        version: Option<u32>,
        #[arg(long)]
        bank: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReformulateArgs {
    #[arg(long)]
    method: String,
    /// Query file (TSV `qid\ttext`, or JSONL by extension)
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    model: String,
    /// Pin every template of the method to this version
    #[arg(long)]
    prompt_version: Option<u32>,
    /// Method parameter overrides as k=v pairs
    #[arg(long = "params", value_name = "K=V")]
    params: Vec<String>,
    /// Write retrieval-ready TSV here (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write structured JSONL results here
    #[arg(long)]
    out_jsonl: Option<PathBuf>,
    #[arg(long)]
    base_url: Option<String>,
    /// Scripted mock backend (JSON list of {match?, texts, delay_ms?})
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Searcher for context methods (e.g. bm25_local)
    #[arg(long)]
    searcher: Option<String>,
    /// Searcher construction options as k=v pairs
    #[arg(long = "searcher-config", value_name = "K=V")]
    searcher_config: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Custom prompt bank file or directory
    #[arg(long)]
    bank: Option<PathBuf>,
}

#[derive(Subcommand)]
enum IndexAction {
    /// Build an index file from a corpus (TSV or JSONL)
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        k1: f64,
        #[arg(long, default_value_t = 0.4)]
        b: f64,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Write a TREC run file here (default: stdout)
    #[arg(long)]
    out_run: Option<PathBuf>,
    #[arg(long, default_value = "querygym")]
    tag: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Scripted mock backend for fully offline runs
    #[arg(long)]
    mock: Option<PathBuf>,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        CliError::data(err.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(err: PromptError) -> Self {
        CliError::data(err.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(err: SearchError) -> Self {
        let code = match err {
            SearchError::Remote { .. } => EXIT_BACKEND,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(err: LlmError) -> Self {
        let code = match err {
            LlmError::InvalidConfig { .. } | LlmError::MissingApiKey { .. } => EXIT_DATA,
            _ => EXIT_BACKEND,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl From<ReformError> for CliError {
    fn from(err: ReformError) -> Self {
        match err {
            ReformError::UnknownMethod { .. }
            | ReformError::InvalidMethodName { .. }
            | ReformError::InvalidParam { .. } => CliError::usage(err.to_string()),
            ReformError::MissingSearcher { method } => CliError::usage(format!(
                "method `{method}` requires a searcher; pass --searcher bm25_local \
                 --searcher-config corpus=PATH (or index=PATH)"
            )),
            ReformError::DuplicateRegistration { .. } => CliError::data(err.to_string()),
            ReformError::Prompt(inner) => inner.into(),
            ReformError::Llm(inner) => inner.into(),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(err: BenchError) -> Self {
        match err {
            BenchError::Llm(inner) => inner.into(),
            BenchError::Search(inner) => inner.into(),
            BenchError::Reform(inner) => inner.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

fn io_error(err: std::io::Error, path: &Path) -> CliError {
    CliError::data(format!("{}: {err}", path.display()))
}

/// Parses `k=v` pairs, naming the offending item on failure.
fn parse_pairs(pairs: &[String], flag: &str) -> Result<Vec<(String, String)>, CliError> {
    pairs
        .iter()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.to_owned()))
                .ok_or_else(|| {
                    CliError::usage(format!("{flag} expects k=v pairs, got `{pair}`"))
                })
        })
        .collect()
}

/// Entry point used by both the binary and the tests.
pub fn run<Out: Write, ErrW: Write>(args: &[OsString], out: &mut Out, err: &mut ErrW) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(parse_err) => {
            use clap::error::ErrorKind;
            return match parse_err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{parse_err}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{parse_err}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(error) => {
            let _ = writeln!(err, "error: {}", error.message);
            error.code
        }
    }
}

/// Convenience for string argv arrays in tests.
pub fn run_str<Out: Write, ErrW: Write>(args: &[&str], out: &mut Out, err: &mut ErrW) -> i32 {
    let args: Vec<OsString> = args.iter().map(OsString::from).collect();
    run(&args, out, err)
}

fn dispatch<Out: Write>(cli: Cli, out: &mut Out) -> Result<(), CliError> {
    match cli.command {
        Command::Methods => cmd_methods(out),
        Command::Prompts { action } => cmd_prompts(action, out),
        Command::Reformulate(args) => cmd_reformulate(args, out),
        Command::Index { action } => cmd_index(action, out),
        Command::Search(args) => cmd_search(args, out),
        Command::Benchmark(args) => cmd_benchmark(args, out),
    }
}

fn cmd_methods<Out: Write>(out: &mut Out) -> Result<(), CliError> {
    for info in list_methods() {
        let requires = if info.requires_searcher { "yes" } else { "no" };
        let _ = writeln!(
            out,
            "{:<18} {:<4} {}",
            info.name, requires, info.default_concat
        );
    }
    Ok(())
}

fn open_bank(path: Option<&PathBuf>) -> Result<Arc<PromptBank>, CliError> {
    match path {
        Some(path) => Ok(Arc::new(load_bank(path)?)),
        None => Ok(default_bank()),
    }
}

fn cmd_prompts<Out: Write>(action: PromptsAction, out: &mut Out) -> Result<(), CliError> {
    match action {
        PromptsAction::List { method, bank } => {
            let bank = open_bank(bank.as_ref())?;
            for row in bank.list(method.as_deref()) {
                let _ = writeln!(
                    out,
                    "{:<26} v{:<3} {:<16} {}",
                    row.id, row.version, row.method, row.description
                );
            }
            Ok(())
        }
        PromptsAction::Show { id, version, bank } => {
            let bank = open_bank(bank.as_ref())?;
            let template = bank.get(&id, version)?;
            let _ = writeln!(out, "id: {}", template.id);
            let _ = writeln!(out, "version: {}", template.version);
            let _ = writeln!(out, "method: {}", template.method);
            let variables: Vec<&str> = template.variables.iter().map(String::as_str).collect();
            let _ = writeln!(out, "variables: {}", variables.join(", "));
            let _ = writeln!(out, "fingerprint: {}", template.fingerprint());
            let _ = writeln!(out, "metadata:");
            for (key, value) in &template.metadata {
                let _ = writeln!(out, "  {key}: {value}");
            }
            let _ = writeln!(out, "messages:");
            for message in &template.messages {
                let _ = writeln!(out, "  [{}]", message.role);
                for line in message.body.lines() {
                    let _ = writeln!(out, "  {line}");
                }
            }
            Ok(())
        }
    }
}

fn load_mock(path: &Path) -> Result<Arc<dyn ChatBackend>, CliError> {
    let content = std::fs::read_to_string(path).map_err(|err| io_error(err, path))?;
    let script: Vec<MockSpec> = serde_json::from_str(&content)
        .map_err(|err| CliError::data(format!("{}: bad mock script: {err}", path.display())))?;
    Ok(make_mock_backend(script))
}

fn build_reformulator(args: &ReformulateArgs) -> Result<Reformulator, CliError> {
    let mut params = MethodParams::default();
    for (key, value) in parse_pairs(&args.params, "--params")? {
        params.set(&key, &value)?;
    }
    if let Some(version) = args.prompt_version {
        params.prompt_version = Some(version);
    }
    if let Some(bank) = &args.bank {
        params.bank = Some(Arc::new(load_bank(bank)?));
    }
    if let Some(searcher_name) = &args.searcher {
        let config: SearcherConfig = parse_pairs(&args.searcher_config, "--searcher-config")?
            .into_iter()
            .collect();
        params.searcher = Some(create_searcher(searcher_name, &config)?);
    }
    if method_info(&args.method).is_some_and(|info| info.requires_searcher)
        && params.searcher.is_none()
    {
        return Err(ReformError::MissingSearcher {
            method: args.method.clone(),
        }
        .into());
    }

    let mut settings = LlmSettings::default();
    if let Some(base_url) = &args.base_url {
        settings.base_url = base_url.clone();
    }
    if let Some(temperature) = args.temperature {
        settings.temperature = temperature;
    }
    if let Some(max_tokens) = args.max_tokens {
        settings.max_tokens = max_tokens;
    }
    if let Some(api_key_env) = &args.api_key_env {
        settings.api_key_env = api_key_env.clone();
    }
    if let Some(max_concurrency) = args.max_concurrency {
        settings.max_concurrency = max_concurrency;
    }

    let reformulator = match &args.mock {
        Some(mock_path) => create_reformulator_with_backend(
            &args.method,
            &args.model,
            params,
            settings,
            args.seed,
            load_mock(mock_path)?,
        )?,
        None => create_reformulator(&args.method, &args.model, params, settings, args.seed)?,
    };
    Ok(reformulator)
}

fn cmd_reformulate<Out: Write>(args: ReformulateArgs, out: &mut Out) -> Result<(), CliError> {
    let reformulator = build_reformulator(&args)?;
    let queries = load_queries(&args.queries)?;
    let results = reformulator.reformulate_batch(&queries);

    let items: Vec<QueryItem> = results
        .iter()
        .map(|result| QueryItem::new(result.qid.clone(), result.reformulated.clone()))
        .collect();
    match &args.out {
        Some(path) => save_queries_tsv(&items, path)?,
        None => {
            for item in &items {
                let _ = writeln!(out, "{}\t{}", item.qid, sanitize_tsv_field(&item.text));
            }
        }
    }
    if let Some(path) = &args.out_jsonl {
        save_results_jsonl(&results, path)?;
    }
    Ok(())
}

fn cmd_index<Out: Write>(action: IndexAction, out: &mut Out) -> Result<(), CliError> {
    match action {
        IndexAction::Build { corpus, out: out_path, k1, b } => {
            let params = BM25Params { k1, b };
            params.validate()?;
            let documents = load_corpus(&corpus)?;
            let index = build_index(&documents)?;
            save_index(&index, &params, &out_path)?;
            let _ = writeln!(
                out,
                "indexed {} documents -> {}",
                index.doc_count(),
                out_path.display()
            );
            Ok(())
        }
    }
}

fn cmd_search<Out: Write>(args: SearchArgs, out: &mut Out) -> Result<(), CliError> {
    let (index, params) = load_index(&args.index)?;
    let queries = load_queries(&args.queries)?;
    let entries: Vec<(String, Vec<querygym::SearchHit>)> = queries
        .iter()
        .map(|query| {
            (
                query.qid.clone(),
                bm25_search(&index, &params, &query.text, args.k),
            )
        })
        .collect();
    match &args.out_run {
        Some(path) => {
            querygym::harness::write_run_file(&entries, path, &args.tag)?;
        }
        None => {
            for (qid, hits) in &entries {
                for hit in hits {
                    let _ = writeln!(out, "{}", format_run_line(qid, hit, &args.tag));
                }
            }
        }
    }
    Ok(())
}

fn cmd_benchmark<Out: Write>(args: BenchmarkArgs, out: &mut Out) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let backend = match &args.mock {
        Some(path) => Some(load_mock(path)?),
        None => None,
    };
    {
        let progress: Box<dyn FnMut(&str)> = Box::new(|line: &str| {
            let _ = writeln!(out, "{line}");
        });
        run_benchmark_with(
            &config,
            RunHooks {
                backend,
                progress: Some(progress),
            },
        )?;
    }
    let _ = writeln!(
        out,
        "manifest: {}",
        config.output_dir.join("manifest.json").display()
    );
    Ok(())
}
