//! Shared fixtures for the criterion benchmarks.

use querygym::data::CorpusDocument;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const VOCAB: [&str; 64] = [
    "search", "query", "index", "ranking", "bm25", "term", "document", "passage", "retrieval",
    "engine", "token", "corpus", "score", "weight", "frequency", "inverse", "length", "field",
    "title", "text", "prompt", "template", "version", "bank", "render", "variable", "message",
    "system", "user", "assistant", "model", "temperature", "seed", "batch", "method", "pipeline",
    "expansion", "keyword", "answer", "question", "knowledge", "sentence", "extract", "generate",
    "fallback", "manifest", "benchmark", "dataset", "config", "output", "concat", "append",
    "repeat", "unique", "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet",
];

/// Deterministic synthetic corpus of `doc_count` documents.
pub fn synthetic_corpus(doc_count: usize, seed: u64) -> Vec<CorpusDocument> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..doc_count)
        .map(|i| {
            let len = rng.random_range(8..96);
            let text: Vec<&str> = (0..len)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
                .collect();
            CorpusDocument {
                docid: format!("doc{i:06}"),
                title: None,
                text: text.join(" "),
            }
        })
        .collect()
}

/// Deterministic short queries over the same vocabulary.
pub fn synthetic_queries(count: usize, seed: u64) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(2..6);
            (0..len)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
