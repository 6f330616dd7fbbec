//! Method pipeline contracts: call budgets, parse rules, concatenation,
//! fallback totality, and batch ordering under concurrency.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use querygym::data::QueryItem;
use querygym::llm::{make_mock_backend, LlmSettings, MockBackend, MockSpec};
use querygym::reform::{
    create_reformulator_with_backend, register_method, ConcatStrategy, MetaValue, MethodOutput,
    MethodParams, MethodPipeline, PipelineCtx, PipelineError, ReformError, Reformulator,
};
use querygym::retrieval::{SearchError, SearchHit, Searcher};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn settings() -> LlmSettings {
    LlmSettings {
        temperature: 0.8,
        max_tokens: 256,
        backoff_base_ms: 1,
        ..LlmSettings::default()
    }
}

fn with_mock(
    method: &str,
    script: Vec<MockSpec>,
    params: MethodParams,
) -> (Reformulator, Arc<MockBackend>) {
    let backend = make_mock_backend(script);
    let reformulator = create_reformulator_with_backend(
        method,
        "gpt-4o",
        params,
        settings(),
        Some(42),
        backend.clone(),
    )
    .unwrap();
    (reformulator, backend)
}

fn query(qid: &str, text: &str) -> QueryItem {
    QueryItem::new(qid, text)
}

fn meta_list<'a>(result: &'a querygym::ReformulationResult, key: &str) -> &'a [String] {
    match result.metadata.get(key) {
        Some(MetaValue::List(items)) => items,
        other => panic!("expected list at `{key}`, got {other:?}"),
    }
}

/// Fixed-response searcher with a call counter.
struct StaticSearcher {
    hits: Vec<(String, String)>,
    calls: AtomicUsize,
    last_k: AtomicUsize,
}

impl StaticSearcher {
    fn new(hits: &[(&str, &str)]) -> Arc<Self> {
        Arc::new(Self {
            hits: hits
                .iter()
                .map(|(docid, text)| ((*docid).to_owned(), (*text).to_owned()))
                .collect(),
            calls: AtomicUsize::new(0),
            last_k: AtomicUsize::new(0),
        })
    }
}

impl Searcher for StaticSearcher {
    fn search(&self, _query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.last_k.store(k, Ordering::SeqCst);
        Ok(self
            .hits
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, (docid, text))| SearchHit {
                docid: docid.clone(),
                score: 1.0 / (i + 1) as f64,
                rank: i + 1,
                fields: BTreeMap::from([("contents".to_owned(), text.clone())]),
            })
            .collect())
    }
}

struct FailingSearcher;

impl Searcher for FailingSearcher {
    fn search(&self, _query: &str, _k: usize) -> Result<Vec<SearchHit>, SearchError> {
        Err(SearchError::Remote {
            detail: "backend down".into(),
        })
    }
}

// --- query2doc ---

#[test]
fn query2doc_repeats_query_five_times_then_passage() {
    let (reformulator, backend) = with_mock(
        "query2doc",
        vec![MockSpec::texts(["paris is the capital of france"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "capital of france"));
    assert_eq!(
        result.reformulated,
        "capital of france capital of france capital of france capital of france capital of france paris is the capital of france"
    );
    assert!(!result.is_fallback());
    assert_eq!(backend.call_count(), 1);
    assert_eq!(meta_list(&result, "prompt_templates"), ["query2doc.passage_gen@1"]);
    assert_eq!(meta_list(&result, "prompt_fingerprints").len(), 1);
    assert_eq!(meta_list(&result, "llm_calls").len(), 1);
}

#[test]
fn query2doc_empty_generation_falls_back() {
    let (reformulator, _backend) = with_mock(
        "query2doc",
        vec![MockSpec::texts([""])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "capital of france"));
    assert_eq!(result.reformulated, "capital of france");
    assert!(result.is_fallback());
}

#[test]
fn query2doc_uses_choice_one_and_archives_the_rest() {
    let mut params = MethodParams::default();
    params.concat_strategy = Some(ConcatStrategy::Append);
    let (reformulator, backend) = with_mock(
        "query2doc",
        vec![MockSpec::texts(["first choice", "second choice", "third"])],
        params,
    );
    let mut reform_settings = settings();
    reform_settings.n = 3;
    let reformulator_n3 = create_reformulator_with_backend(
        "query2doc",
        "gpt-4o",
        {
            let mut p = MethodParams::default();
            p.concat_strategy = Some(ConcatStrategy::Append);
            p
        },
        reform_settings,
        Some(42),
        backend.clone(),
    )
    .unwrap();
    drop(reformulator);

    let result = reformulator_n3.reformulate(&query("q1", "capital"));
    assert_eq!(result.reformulated, "capital first choice");
    assert!(!result.reformulated.contains("second choice"));
    assert_eq!(meta_list(&result, "generations").len(), 3);
    assert_eq!(backend.call_count(), 1);
}

// --- genqr ---

#[test]
fn genqr_parses_keywords_from_commas_and_newlines() {
    let (reformulator, backend) = with_mock(
        "genqr",
        vec![MockSpec::texts(["blue, azure\nnavy"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "ocean color"));
    assert_eq!(result.reformulated, "ocean color blue azure navy");
    assert_eq!(backend.call_count(), 1);
}

#[test]
fn genqr_echoing_the_query_still_succeeds() {
    let (reformulator, _) = with_mock(
        "genqr",
        vec![MockSpec::texts(["ocean color"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "ocean color"));
    assert_eq!(result.reformulated, "ocean color");
    assert!(!result.is_fallback());
}

#[test]
fn genqr_zero_keywords_falls_back() {
    let (reformulator, _) = with_mock(
        "genqr",
        vec![MockSpec::texts([" , \n"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "ocean color"));
    assert!(result.is_fallback());
    assert_eq!(result.reformulated, "ocean color");
}

// --- genqr_ensemble ---

#[test]
fn genqr_ensemble_unions_variant_keywords_in_order() {
    let mut params = MethodParams::default();
    params.n_instructions = 2;
    let (reformulator, backend) = with_mock(
        "genqr_ensemble",
        vec![MockSpec::texts(["a, b"]), MockSpec::texts(["b, c"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "zulu"));
    assert_eq!(result.reformulated, "zulu a b c");
    assert_eq!(backend.call_count(), 2);
    assert_eq!(
        meta_list(&result, "prompt_templates"),
        ["genqr_ensemble.v01@1", "genqr_ensemble.v02@1"]
    );
}

#[test]
fn genqr_ensemble_tolerates_one_failing_variant() {
    let mut params = MethodParams::default();
    params.n_instructions = 3;
    // Second variant yields an empty completion (an injected failure).
    let (reformulator, backend) = with_mock(
        "genqr_ensemble",
        vec![
            MockSpec::texts(["alpha"]),
            MockSpec::texts(Vec::<String>::new()),
            MockSpec::texts(["beta"]),
        ],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "zulu"));
    assert_eq!(result.reformulated, "zulu alpha beta");
    assert!(!result.is_fallback());
    assert_eq!(backend.call_count(), 3);
    let errors = meta_list(&result, "partial_errors");
    assert_eq!(errors.len(), 1);
    assert!(errors[0].contains("genqr_ensemble.v02"));
}

#[test]
fn genqr_ensemble_with_one_instruction_degenerates_to_genqr() {
    let mut params = MethodParams::default();
    params.n_instructions = 1;
    let (reformulator, backend) = with_mock(
        "genqr_ensemble",
        vec![MockSpec::texts(["blue, azure"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "ocean"));
    assert_eq!(result.reformulated, "ocean blue azure");
    assert_eq!(backend.call_count(), 1);
}

#[test]
fn genqr_ensemble_beyond_shipped_variants_fails_at_create() {
    let mut params = MethodParams::default();
    params.n_instructions = 11;
    let backend = make_mock_backend([]);
    let err = create_reformulator_with_backend(
        "genqr_ensemble",
        "gpt-4o",
        params,
        settings(),
        None,
        backend,
    )
    .unwrap_err();
    assert!(matches!(err, ReformError::Prompt(_)));
}

// --- query2e ---

#[test]
fn query2e_parses_like_genqr() {
    let (reformulator, backend) = with_mock(
        "query2e",
        vec![MockSpec::texts(["eiffel tower, paris\nfrance"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "landmarks"));
    assert_eq!(result.reformulated, "landmarks eiffel tower paris france");
    assert_eq!(backend.call_count(), 1);
}

// --- qa_expand ---

#[test]
fn qa_expand_budget_is_one_plus_parsed_questions() {
    let (reformulator, backend) = with_mock(
        "qa_expand",
        vec![
            MockSpec::texts(["1. What is BM25?\n2. Who uses BM25?"]),
            MockSpec::texts(["answer one"]),
            MockSpec::texts(["answer two"]),
        ],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "bm25"));
    assert_eq!(backend.call_count(), 3);
    assert_eq!(result.reformulated, "bm25 answer one answer two");
    assert_eq!(
        meta_list(&result, "questions"),
        ["What is BM25?", "Who uses BM25?"]
    );
}

#[test]
fn qa_expand_num_questions_one_makes_exactly_two_calls() {
    let mut params = MethodParams::default();
    params.num_questions = 1;
    let (reformulator, backend) = with_mock(
        "qa_expand",
        vec![
            MockSpec::texts(["1. only question\n2. ignored beyond cap"]),
            MockSpec::texts(["the answer"]),
        ],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "bm25"));
    assert_eq!(backend.call_count(), 2);
    assert_eq!(result.reformulated, "bm25 the answer");
}

#[test]
fn qa_expand_zero_questions_falls_back_after_one_call() {
    let (reformulator, backend) = with_mock(
        "qa_expand",
        vec![MockSpec::texts(["\n \n"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "bm25"));
    assert!(result.is_fallback());
    assert_eq!(backend.call_count(), 1);
}

// --- mugi ---

#[test]
fn mugi_single_call_when_backend_returns_all_choices() {
    let (reformulator, backend) = with_mock(
        "mugi",
        vec![MockSpec::texts(["p one", "p two", "p three"])],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "some query here now"));
    assert_eq!(backend.call_count(), 1);
    assert!(!result.is_fallback());
    assert!(result.reformulated.contains("p one"));
    assert!(result.reformulated.contains("p three"));
}

#[test]
fn mugi_tops_up_sequentially_within_budget() {
    let (reformulator, backend) = with_mock(
        "mugi",
        vec![
            MockSpec::texts(["p one"]),
            MockSpec::texts(["p two"]),
            MockSpec::texts(["p three"]),
        ],
        MethodParams::default(),
    );
    let result = reformulator.reformulate(&query("q1", "some query here now"));
    assert_eq!(backend.call_count(), 3);
    assert!(result.reformulated.contains("p three"));
    let recorded = backend.recorded();
    assert_eq!(recorded[0].n, 3);
    assert_eq!(recorded[1].n, 1);
}

#[test]
fn mugi_adaptive_weight_follows_the_ratio_rule() {
    // Query of 4 tokens; one pseudo-doc of 40 tokens; lambda 0.3 -> w = 3.
    let passage = (0..40).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" ");
    let mut params = MethodParams::default();
    params.num_docs = 1;
    let (reformulator, _) = with_mock("mugi", vec![MockSpec::texts([passage])], params);
    let result = reformulator.reformulate(&query("q1", "one two three four"));
    assert_eq!(
        result.metadata.get("adaptive_query_weight"),
        Some(&MetaValue::Int(3))
    );
    assert!(result
        .reformulated
        .starts_with("one two three four one two three four one two three four tok0"));
}

#[test]
fn mugi_lambda_zero_clamps_weight_to_one() {
    let mut params = MethodParams::default();
    params.num_docs = 1;
    params.mugi_lambda = 0.0;
    let (reformulator, _) = with_mock("mugi", vec![MockSpec::texts(["a passage"])], params);
    let result = reformulator.reformulate(&query("q1", "one two"));
    assert_eq!(
        result.metadata.get("adaptive_query_weight"),
        Some(&MetaValue::Int(1))
    );
    assert_eq!(result.reformulated, "one two a passage");
}

// --- lamer ---

#[test]
fn lamer_renders_passages_in_rank_order() {
    let searcher = StaticSearcher::new(&[("d1", "p1"), ("d2", "p2"), ("d3", "p3")]);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher.clone());
    params.retrieval_k = 3;
    let (reformulator, backend) = with_mock(
        "lamer",
        vec![MockSpec::texts(["candidate answer"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "who wrote bm25"));
    assert_eq!(backend.call_count(), 1);
    assert_eq!(searcher.calls.load(Ordering::SeqCst), 1);

    let recorded = backend.recorded();
    let prompt_text: String = recorded[0]
        .messages
        .iter()
        .map(|m| m.body.clone())
        .collect::<Vec<_>>()
        .join("\n");
    assert!(prompt_text.contains("[1] p1\n[2] p2\n[3] p3"));
    assert_eq!(result.reformulated, "who wrote bm25 candidate answer");
    assert_eq!(meta_list(&result, "retrieved_docids"), ["d1", "d2", "d3"]);
}

#[test]
fn lamer_zero_hits_uses_explicit_marker() {
    let searcher = StaticSearcher::new(&[]);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher);
    let (reformulator, backend) = with_mock(
        "lamer",
        vec![MockSpec::texts(["unguided answer"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "obscure thing"));
    let prompt_text: String = backend.recorded()[0]
        .messages
        .iter()
        .map(|m| m.body.clone())
        .collect::<Vec<_>>()
        .join("\n");
    assert!(prompt_text.contains("(no passages retrieved)"));
    assert!(!result.is_fallback());
}

#[test]
fn lamer_searcher_error_falls_back() {
    let mut params = MethodParams::default();
    params.searcher = Some(Arc::new(FailingSearcher));
    let (reformulator, backend) = with_mock(
        "lamer",
        vec![MockSpec::texts(["never used"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "anything"));
    assert!(result.is_fallback());
    assert_eq!(result.reformulated, "anything");
    assert_eq!(backend.call_count(), 0);
}

#[test]
fn lamer_blank_line_splits_answers() {
    let searcher = StaticSearcher::new(&[("d1", "p1")]);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher);
    params.concat_strategy = Some(ConcatStrategy::Append);
    let (reformulator, _) = with_mock(
        "lamer",
        vec![MockSpec::texts(["answer one\n\nanswer two\n\nanswer three"])],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "q"));
    assert_eq!(result.reformulated, "q answer one answer two answer three");
    assert_eq!(meta_list(&result, "expansions").len(), 3);
}

// --- csqe ---

#[test]
fn csqe_makes_one_search_and_two_llm_calls() {
    let ten: Vec<(String, String)> = (0..10)
        .map(|i| (format!("d{i}"), format!("passage {i}")))
        .collect();
    let refs: Vec<(&str, &str)> = ten
        .iter()
        .map(|(d, t)| (d.as_str(), t.as_str()))
        .collect();
    let searcher = StaticSearcher::new(&refs);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher.clone());
    let (reformulator, backend) = with_mock(
        "csqe",
        vec![
            MockSpec::matching("Extract the sentences", ["relevant sentence one\nrelevant sentence two"]),
            MockSpec::matching("knowledge passages", ["gen one\n\ngen two"]),
        ],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "what is bm25"));

    assert_eq!(searcher.calls.load(Ordering::SeqCst), 1);
    assert_eq!(searcher.last_k.load(Ordering::SeqCst), 10);
    assert_eq!(backend.call_count(), 2);

    let extraction_prompt: String = backend.recorded()[0]
        .messages
        .iter()
        .map(|m| m.body.clone())
        .collect::<Vec<_>>()
        .join("\n");
    for i in 0..10 {
        assert!(extraction_prompt.contains(&format!("passage {i}")));
    }

    // Extracted sentences come before generated passages.
    let expansions = meta_list(&result, "expansions");
    assert_eq!(
        expansions,
        [
            "relevant sentence one",
            "relevant sentence two",
            "gen one",
            "gen two"
        ]
    );
    // repeat_query w=5 default.
    assert!(result.reformulated.starts_with(
        "what is bm25 what is bm25 what is bm25 what is bm25 what is bm25 relevant sentence one"
    ));
}

#[test]
fn csqe_succeeds_on_generation_alone() {
    let searcher = StaticSearcher::new(&[("d1", "p1")]);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher);
    let (reformulator, backend) = with_mock(
        "csqe",
        vec![
            MockSpec::matching("Extract the sentences", [""]),
            MockSpec::matching("knowledge passages", ["generated knowledge"]),
        ],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "topic"));
    assert!(!result.is_fallback());
    assert!(result.reformulated.contains("generated knowledge"));
    assert_eq!(backend.call_count(), 2);
}

#[test]
fn csqe_both_steps_empty_falls_back() {
    let searcher = StaticSearcher::new(&[("d1", "p1")]);
    let mut params = MethodParams::default();
    params.searcher = Some(searcher);
    let (reformulator, _) = with_mock(
        "csqe",
        vec![
            MockSpec::matching("Extract the sentences", [""]),
            MockSpec::matching("knowledge passages", [""]),
        ],
        params,
    );
    let result = reformulator.reformulate(&query("q1", "topic"));
    assert!(result.is_fallback());
    assert_eq!(result.reformulated, "topic");
}

#[test]
fn csqe_without_searcher_fails_at_create() {
    let backend = make_mock_backend([]);
    let err = create_reformulator_with_backend(
        "csqe",
        "gpt-4o",
        MethodParams::default(),
        settings(),
        None,
        backend,
    )
    .unwrap_err();
    assert!(matches!(err, ReformError::MissingSearcher { method } if method == "csqe"));
}

// --- framework-level behavior ---

#[test]
fn unknown_method_is_rejected() {
    let backend = make_mock_backend([]);
    let err = create_reformulator_with_backend(
        "nope",
        "gpt-4o",
        MethodParams::default(),
        settings(),
        None,
        backend,
    )
    .unwrap_err();
    assert!(matches!(err, ReformError::UnknownMethod { name } if name == "nope"));
}

#[test]
fn scripted_total_failure_falls_back_with_error_metadata() {
    let (reformulator, _) = with_mock("query2doc", vec![], MethodParams::default());
    let result = reformulator.reformulate(&query("q1", "capital of france"));
    assert_eq!(result.reformulated, "capital of france");
    assert!(result.is_fallback());
    assert!(matches!(
        result.metadata.get("error"),
        Some(MetaValue::Str(_))
    ));
}

#[test]
fn version_pin_to_missing_version_fails_at_create() {
    let mut params = MethodParams::default();
    params.prompt_version = Some(99);
    let backend = make_mock_backend([]);
    let err = create_reformulator_with_backend(
        "query2doc",
        "gpt-4o",
        params,
        settings(),
        None,
        backend,
    )
    .unwrap_err();
    assert!(matches!(err, ReformError::Prompt(_)));
}

#[test]
fn batch_preserves_length_and_order() {
    let queries: Vec<QueryItem> = (0..3)
        .map(|i| query(&format!("q{i}"), &format!("text {i}")))
        .collect();
    let script: Vec<MockSpec> = (0..3).map(|i| MockSpec::texts([format!("gen {i}")])).collect();
    let (reformulator, _) = with_mock("query2doc", script, MethodParams::default());
    let results = reformulator.reformulate_batch(&queries);
    assert_eq!(results.len(), 3);
    for (result, query) in results.iter().zip(&queries) {
        assert_eq!(result.qid, query.qid);
        assert_eq!(result.original, query.text);
    }
    assert!(reformulator.reformulate_batch(&[]).is_empty());
}

#[test]
fn batch_order_survives_concurrency_and_random_delays() {
    let mut rng = StdRng::seed_from_u64(42);
    for _run in 0..5 {
        let queries: Vec<QueryItem> = (0..40)
            .map(|i| query(&format!("q{i:02}"), &format!("query text {i}")))
            .collect();
        let script: Vec<MockSpec> = (0..40)
            .map(|i| {
                MockSpec::texts([format!("gen {i}")]).with_delay_ms(rng.random_range(0..4))
            })
            .collect();
        let (reformulator, _) = with_mock("query2doc", script, MethodParams::default());
        let results = reformulator.reformulate_batch(&queries);
        let qids: Vec<&str> = results.iter().map(|r| r.qid.as_str()).collect();
        let expected: Vec<String> = (0..40).map(|i| format!("q{i:02}")).collect();
        assert_eq!(qids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }
}

#[test]
fn progress_callback_counts_to_total() {
    let queries: Vec<QueryItem> = (0..7)
        .map(|i| query(&format!("q{i}"), "text"))
        .collect();
    let script: Vec<MockSpec> = (0..7).map(|_| MockSpec::texts(["gen"])).collect();
    let (reformulator, _) = with_mock("query2doc", script, MethodParams::default());
    let seen = std::sync::Mutex::new(Vec::new());
    let outcome = reformulator.reformulate_batch_traced(
        &queries,
        Some(&|done, total| seen.lock().unwrap().push((done, total))),
    );
    assert_eq!(outcome.results.len(), 7);
    let mut seen = seen.into_inner().unwrap();
    seen.sort_unstable();
    assert_eq!(seen, (1..=7).map(|i| (i, 7)).collect::<Vec<_>>());
}

#[test]
fn custom_method_with_direct_reformulation_output() {
    struct ReverseEcho;
    impl MethodPipeline for ReverseEcho {
        fn run(
            &self,
            query: &QueryItem,
            _ctx: &mut PipelineCtx<'_>,
        ) -> Result<MethodOutput, PipelineError> {
            Ok(MethodOutput::Reformulated(
                query.text.chars().rev().collect(),
            ))
        }
    }
    register_method(
        "reverse_echo_test",
        Arc::new(|| Box::new(ReverseEcho)),
        false,
        ConcatStrategy::Append,
    )
    .unwrap();

    let backend = make_mock_backend([]);
    let reformulator = create_reformulator_with_backend(
        "reverse_echo_test",
        "unused-model",
        MethodParams::default(),
        settings(),
        None,
        backend,
    )
    .unwrap();
    let result = reformulator.reformulate(&query("q1", "abc"));
    assert_eq!(result.reformulated, "cba");
    assert!(!result.is_fallback());

    let err = register_method(
        "reverse_echo_test",
        Arc::new(|| Box::new(ReverseEcho)),
        false,
        ConcatStrategy::Append,
    )
    .unwrap_err();
    assert!(matches!(err, ReformError::DuplicateRegistration { .. }));
    assert!(register_method(
        "Bad Name",
        Arc::new(|| Box::new(ReverseEcho)),
        false,
        ConcatStrategy::Append,
    )
    .is_err());
}

#[test]
fn substring_guarantee_for_append_and_repeat() {
    for strategy in [ConcatStrategy::Append, ConcatStrategy::RepeatQuery] {
        let mut params = MethodParams::default();
        params.concat_strategy = Some(strategy);
        let (reformulator, _) = with_mock(
            "query2doc",
            vec![MockSpec::texts(["extra passage text"])],
            params,
        );
        let original = "tokenized query words";
        let result = reformulator.reformulate(&query("q1", original));
        assert!(
            result.reformulated.contains(original),
            "{strategy}: `{}` lost the original",
            result.reformulated
        );
    }
}
