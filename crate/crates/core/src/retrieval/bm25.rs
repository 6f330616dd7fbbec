//! In-memory BM25 inverted index.
//!
//! Scoring follows the Lucene-style variant:
//!
//! ```text
//! score(d, q) = sum over distinct query terms t in d of
//!     mult(t) * idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! where `mult(t)` is the term's multiplicity in the query. Ties break by
//! docid ascending, and documents with no term overlap are never returned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::CorpusDocument;

use super::{SearchError, SearchHit, Searcher, SearcherConfig};

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
/// No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(str::to_owned)
        .collect()
}

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BM25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for BM25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl BM25Params {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.k1 > 0.0) {
            return Err(SearchError::InvalidParams {
                detail: format!("k1 must be > 0, got {}", self.k1),
            });
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(SearchError::InvalidParams {
                detail: format!("b must be in [0, 1], got {}", self.b),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StoredFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    contents: String,
}

/// Immutable inverted index over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BM25Index {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    docids: Vec<String>,
    stored: Vec<StoredFields>,
    total_tokens: u64,
}

impl BM25Index {
    pub fn doc_count(&self) -> usize {
        self.docids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.docids.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.docids.len() as f64
        }
    }

    /// Number of documents containing `term`.
    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn docid(&self, ordinal: u32) -> &str {
        &self.docids[ordinal as usize]
    }

    fn hit_fields(&self, ordinal: u32) -> BTreeMap<String, String> {
        let stored = &self.stored[ordinal as usize];
        let mut fields = BTreeMap::new();
        fields.insert("contents".to_owned(), stored.contents.clone());
        if let Some(title) = &stored.title {
            fields.insert("title".to_owned(), title.clone());
        }
        fields
    }
}

/// Builds an index over `tokenize(title + " " + text)` (or just the text when
/// there is no title), storing `contents` and `title` per document.
pub fn build_index(corpus: &[CorpusDocument]) -> Result<BM25Index, SearchError> {
    if corpus.is_empty() {
        return Err(SearchError::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    let mut docids = Vec::with_capacity(corpus.len());
    let mut stored = Vec::with_capacity(corpus.len());
    let mut seen = std::collections::HashSet::new();
    let mut total_tokens = 0u64;

    for (ordinal, doc) in corpus.iter().enumerate() {
        if !seen.insert(doc.docid.as_str()) {
            return Err(SearchError::DuplicateDocid {
                docid: doc.docid.clone(),
            });
        }
        let tokens = match &doc.title {
            Some(title) => tokenize(&format!("{title} {}", doc.text)),
            None => tokenize(&doc.text),
        };
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for token in &tokens {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term.to_owned()).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
        total_tokens += tokens.len() as u64;
        doc_lengths.push(tokens.len() as u32);
        docids.push(doc.docid.clone());
        stored.push(StoredFields {
            title: doc.title.clone(),
            contents: doc.text.clone(),
        });
    }

    Ok(BM25Index {
        postings,
        doc_lengths,
        docids,
        stored,
        total_tokens,
    })
}

/// Scores `query` against the index and returns the top `k` hits, ranked by
/// score descending with ties broken by docid ascending.
pub fn bm25_search(
    index: &BM25Index,
    params: &BM25Params,
    query: &str,
    k: usize,
) -> Vec<SearchHit> {
    let doc_count = index.doc_count();
    if doc_count == 0 || k == 0 {
        return Vec::new();
    }
    let mut multiplicity: BTreeMap<String, u32> = BTreeMap::new();
    for term in tokenize(query) {
        *multiplicity.entry(term).or_insert(0) += 1;
    }

    let n = doc_count as f64;
    let avgdl = index.avg_doc_length();
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for (term, mult) in &multiplicity {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let df = postings.len() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for posting in postings {
            let tf = posting.tf as f64;
            let len = index.doc_lengths[posting.doc as usize] as f64;
            let norm = params.k1 * (1.0 - params.b + params.b * len / avgdl);
            let contribution = idf * tf * (params.k1 + 1.0) / (tf + norm);
            *scores.entry(posting.doc).or_insert(0.0) += *mult as f64 * contribution;
        }
    }

    let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
    ranked.sort_by(|(doc_a, score_a), (doc_b, score_b)| {
        score_b
            .partial_cmp(score_a)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| index.docid(*doc_a).cmp(index.docid(*doc_b)))
    });
    ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (ordinal, score))| SearchHit {
            docid: index.docid(ordinal).to_owned(),
            score,
            rank: i + 1,
            fields: index.hit_fields(ordinal),
        })
        .collect()
}

/// The `bm25_local` searcher: an index plus fixed parameters.
pub struct BM25Searcher {
    index: BM25Index,
    params: BM25Params,
}

impl BM25Searcher {
    pub fn new(index: BM25Index, params: BM25Params) -> Result<Self, SearchError> {
        params.validate()?;
        Ok(Self { index, params })
    }

    pub fn from_corpus(
        corpus: &[CorpusDocument],
        params: BM25Params,
    ) -> Result<Self, SearchError> {
        Self::new(build_index(corpus)?, params)
    }

    pub fn index(&self) -> &BM25Index {
        &self.index
    }

    pub fn params(&self) -> BM25Params {
        self.params
    }
}

impl Searcher for BM25Searcher {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
        Ok(bm25_search(&self.index, &self.params, query, k))
    }
}

fn parse_param(config: &SearcherConfig, key: &str) -> Result<Option<f64>, SearchError> {
    match config.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<f64>()
            .map(Some)
            .map_err(|_| SearchError::InvalidConfig {
                key: key.to_owned(),
                detail: format!("expected a number, got `{raw}`"),
            }),
    }
}

/// Factory behind the registry's `bm25_local` entry.
pub(super) fn bm25_local_factory(
    config: &SearcherConfig,
) -> Result<std::sync::Arc<dyn Searcher>, SearchError> {
    let (index, mut params) = match (config.get("corpus"), config.get("index")) {
        (Some(_), Some(_)) => {
            return Err(SearchError::InvalidConfig {
                key: "corpus".into(),
                detail: "give either `corpus` or `index`, not both".into(),
            })
        }
        (Some(corpus_path), None) => {
            let corpus = crate::data::load_corpus(corpus_path)?;
            (build_index(&corpus)?, BM25Params::default())
        }
        (None, Some(index_path)) => super::index_file::load_index(index_path)?,
        (None, None) => {
            return Err(SearchError::InvalidConfig {
                key: "corpus".into(),
                detail: "bm25_local needs a `corpus` or `index` path".into(),
            })
        }
    };
    if let Some(k1) = parse_param(config, "k1")? {
        params.k1 = k1;
    }
    if let Some(b) = parse_param(config, "b")? {
        params.b = b;
    }
    Ok(std::sync::Arc::new(BM25Searcher::new(index, params)?))
}
